//! Hyperparameter grid sweep with one-at-a-time slices around the best point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eval::metrics::MetricsReport;
use crate::router::train::HyperParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    MicroF1,
    MacroF1,
    SampleF1,
}

impl SelectionMetric {
    pub fn of(self, m: &MetricsReport) -> f64 {
        match self {
            SelectionMetric::MicroF1 => m.micro_f1,
            SelectionMetric::MacroF1 => m.macro_f1,
            SelectionMetric::SampleF1 => m.sample_f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub epoch_counts: Vec<usize>,
    pub selection_metric: SelectionMetric,
}

impl SweepGrid {
    /// The transformer-scale grid: batch {8,16,32}, lr {2e-5,3e-5,5e-5},
    /// epochs 2..=15.
    pub fn transformer() -> Self {
        SweepGrid {
            batch_sizes: vec![8, 16, 32],
            learning_rates: vec![2e-5, 3e-5, 5e-5],
            epoch_counts: (2..=15).collect(),
            selection_metric: SelectionMetric::MicroF1,
        }
    }

    /// Same shape as [`SweepGrid::transformer`] with learning rates suited to the
    /// native logistic backbone.
    pub fn native() -> Self {
        SweepGrid {
            learning_rates: vec![0.05, 0.1, 0.2],
            ..SweepGrid::transformer()
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.batch_sizes.is_empty() || self.learning_rates.is_empty() || self.epoch_counts.is_empty() {
            return Err(SweepError::EmptyGrid);
        }
        Ok(())
    }

    /// Cartesian product in batch, learning-rate, epoch order.
    pub fn configs(&self, base: &HyperParams) -> Vec<HyperParams> {
        let mut out = Vec::new();
        for &batch_size in &self.batch_sizes {
            for &learning_rate in &self.learning_rates {
                for &epochs in &self.epoch_counts {
                    out.push(HyperParams {
                        batch_size,
                        learning_rate,
                        epochs,
                        ..base.clone()
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SweepError {
    #[error("sweep grid has an empty axis")]
    EmptyGrid,
    #[error("every configuration failed; first error: {0}")]
    AllFailed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub hp: HyperParams,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    BatchSize,
    LearningRate,
    Epochs,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::BatchSize, Axis::LearningRate, Axis::Epochs];

    pub fn value(self, hp: &HyperParams) -> f64 {
        match self {
            Axis::BatchSize => hp.batch_size as f64,
            Axis::LearningRate => hp.learning_rate,
            Axis::Epochs => hp.epochs as f64,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::BatchSize => "batch size",
            Axis::LearningRate => "learning rate",
            Axis::Epochs => "epochs",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            Axis::BatchSize => "batch_size",
            Axis::LearningRate => "learning_rate",
            Axis::Epochs => "epochs",
        }
    }
}

/// Points that differ from the best configuration only along `axis`,
/// ordered by the axis value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub axis: Axis,
    pub points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub selection_metric: SelectionMetric,
    pub points: Vec<SweepPoint>,
    pub best: usize,
    pub slices: Vec<Slice>,
}

impl SweepResult {
    pub fn best_point(&self) -> &SweepPoint {
        &self.points[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "batch_size",
            "learning_rate",
            "epochs",
            "micro_f1",
            "macro_f1",
            "sample_f1",
            "subset_accuracy",
            "jaccard_accuracy",
            "error",
        ])
        .expect("in-memory csv");
        for p in &self.points {
            let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
            let m = p.metrics.as_ref();
            w.write_record([
                p.hp.batch_size.to_string(),
                p.hp.learning_rate.to_string(),
                p.hp.epochs.to_string(),
                f(m.map(|m| m.micro_f1)),
                f(m.map(|m| m.macro_f1)),
                f(m.map(|m| m.sample_f1)),
                f(m.map(|m| m.subset_accuracy)),
                f(m.map(|m| m.jaccard_accuracy)),
                p.error.clone().unwrap_or_default(),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Evaluate every grid configuration with `evaluate` (in parallel) and pick
/// the best by the selection metric; ties go to the earliest configuration in
/// grid order. Failing configurations are recorded and skipped.
pub fn run_sweep_with<F>(grid: &SweepGrid, base: &HyperParams, evaluate: F) -> Result<SweepResult, SweepError>
where
    F: Fn(&HyperParams) -> Result<MetricsReport, String> + Sync,
{
    grid.validate()?;
    let points: Vec<SweepPoint> = grid
        .configs(base)
        .into_par_iter()
        .map(|hp| match evaluate(&hp) {
            Ok(m) => SweepPoint {
                hp,
                metrics: Some(m),
                error: None,
            },
            Err(e) => SweepPoint {
                hp,
                metrics: None,
                error: Some(e),
            },
        })
        .collect();
    let metric = grid.selection_metric;
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        if let Some(m) = &p.metrics {
            let v = metric.of(m);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    let Some((best, _)) = best else {
        let first = points.iter().find_map(|p| p.error.clone()).unwrap_or_default();
        return Err(SweepError::AllFailed(first));
    };
    let b = &points[best].hp;
    let slices = Axis::ALL
        .iter()
        .map(|&axis| {
            let mut idx: Vec<usize> = points
                .iter()
                .enumerate()
                .filter(|(_, p)| {
                    Axis::ALL
                        .iter()
                        .filter(|a| **a != axis)
                        .all(|a| a.value(&p.hp) == a.value(b))
                })
                .map(|(i, _)| i)
                .collect();
            idx.sort_by(|x, y| axis.value(&points[*x].hp).total_cmp(&axis.value(&points[*y].hp)));
            Slice { axis, points: idx }
        })
        .collect();
    Ok(SweepResult {
        selection_metric: metric,
        points,
        best,
        slices,
    })
}
