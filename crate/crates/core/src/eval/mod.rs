//! Metrics, split evaluation and hyperparameter sweeps.

pub mod metrics;
pub mod plot;
pub mod split;
pub mod sweep;

use rayon::prelude::*;
use serde::Serialize;

pub use metrics::{compute_metrics, frequency_baseline, MetricsError, MetricsReport};
pub use split::{stratified_split, Split, SplitSpec, SplitWarning};
pub use sweep::{run_sweep_with, SelectionMetric, SweepGrid, SweepResult};

use crate::note::Note;
use crate::router::backbone::{score_note, BackboneError, BackboneProvider};
use crate::router::calibrate::{calibrate_thresholds, CalibrationError, CalibrationReport};
use crate::router::features::FeatureSpec;
use crate::router::model::RouterModel;
use crate::router::train::{train, HyperParams, TrainError, TrainReport};
use crate::taxonomy::LabelSet;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Split(#[from] split::SplitError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Sweep(#[from] sweep::SweepError),
    #[error(transparent)]
    Backbone(#[from] BackboneError),
}

pub fn predict_all(model: &RouterModel, notes: &[(Note, LabelSet)]) -> Vec<LabelSet> {
    notes.par_iter().map(|(n, _)| model.predict_labels(n)).collect()
}

pub fn evaluate_model(model: &RouterModel, data: &[(Note, LabelSet)]) -> Result<MetricsReport, MetricsError> {
    let gold: Vec<LabelSet> = data.iter().map(|(_, g)| *g).collect();
    compute_metrics(&gold, &predict_all(model, data))
}

/// Metrics of `provider` on `data`. Feature outputs are scored by `model`;
/// either way labels come from `model`'s thresholds.
pub fn evaluate_provider(
    provider: &dyn BackboneProvider,
    model: &RouterModel,
    data: &[(Note, LabelSet)],
) -> Result<MetricsReport, EvalError> {
    let pred = data
        .iter()
        .map(|(note, _)| score_note(provider, model, note).map(|p| p.threshold(&model.thresholds)))
        .collect::<Result<Vec<_>, _>>()?;
    let gold: Vec<LabelSet> = data.iter().map(|(_, g)| *g).collect();
    Ok(compute_metrics(&gold, &pred)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitEvalOutcome {
    pub sizes: (usize, usize, usize),
    pub warnings: Vec<SplitWarning>,
    pub train_report: TrainReport,
    pub calibration: CalibrationReport,
    pub val_uncalibrated: MetricsReport,
    pub val: MetricsReport,
    pub test: MetricsReport,
    /// Test metrics of the label-frequency baseline fitted on train.
    pub baseline_test: MetricsReport,
    #[serde(skip)]
    pub model: RouterModel,
}

fn pick(data: &[(Note, LabelSet)], idx: &[usize]) -> Vec<(Note, LabelSet)> {
    idx.iter().map(|i| data[*i].clone()).collect()
}

/// Split, train, calibrate on validation, report on test.
pub fn run_split_eval(
    data: &[(Note, LabelSet)],
    split_spec: &SplitSpec,
    hp: &HyperParams,
    spec: &FeatureSpec,
) -> Result<SplitEvalOutcome, EvalError> {
    let labels: Vec<LabelSet> = data.iter().map(|(_, l)| *l).collect();
    let split = stratified_split(&labels, split_spec)?;
    let train_set: Vec<_> = pick(data, &split.train)
        .into_iter()
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let val_set = pick(data, &split.val);
    let test_set = pick(data, &split.test);
    let (model, train_report) = train(&train_set, hp, spec)?;
    let val_uncalibrated = evaluate_model(&model, &val_set)?;
    let (model, calibration) = calibrate_thresholds(&model, &val_set)?;
    let val = evaluate_model(&model, &val_set)?;
    let test = evaluate_model(&model, &test_set)?;
    let base = frequency_baseline(&train_set.iter().map(|(_, l)| *l).collect::<Vec<_>>());
    let test_gold: Vec<LabelSet> = test_set.iter().map(|(_, l)| *l).collect();
    let baseline_test = compute_metrics(&test_gold, &vec![base; test_gold.len()])?;
    Ok(SplitEvalOutcome {
        sizes: (split.train.len(), split.val.len(), split.test.len()),
        warnings: split.warnings,
        train_report,
        calibration,
        val_uncalibrated,
        val,
        test,
        baseline_test,
        model,
    })
}

/// Sweep the native backbone: train on `train` per configuration and score on
/// `val` at the default 0.5 thresholds.
pub fn run_native_sweep(
    train_set: &[(Note, LabelSet)],
    val: &[(Note, LabelSet)],
    grid: &SweepGrid,
    base: &HyperParams,
    spec: &FeatureSpec,
) -> Result<SweepResult, EvalError> {
    Ok(run_sweep_with(grid, base, |hp| {
        let (model, _) = train(train_set, hp, spec).map_err(|e| e.to_string())?;
        evaluate_model(&model, val).map_err(|e| e.to_string())
    })?)
}
