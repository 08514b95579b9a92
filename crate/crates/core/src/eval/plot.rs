//! Sensitivity curves (F1 and accuracy against one hyperparameter) as SVG.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::eval::sweep::{Axis, Slice, SweepResult};

#[derive(Debug, thiserror::Error)]
pub enum PlotError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("drawing: {0}")]
    Draw(String),
}

fn draw_err<E: std::fmt::Debug>(e: E) -> PlotError {
    PlotError::Draw(format!("{e:?}"))
}

/// Render one slice. Points are placed at equal spacing and labeled with the
/// axis value; configurations that failed are skipped.
pub fn slice_svg(result: &SweepResult, slice: &Slice) -> Result<String, PlotError> {
    let pts: Vec<(f64, f64, f64, f64)> = slice
        .points
        .iter()
        .filter_map(|i| {
            let p = &result.points[*i];
            p.metrics.as_ref().map(|m| {
                (
                    slice.axis.value(&p.hp),
                    m.micro_f1,
                    m.subset_accuracy,
                    m.jaccard_accuracy,
                )
            })
        })
        .collect();
    let labels: Vec<String> = pts
        .iter()
        .map(|p| match slice.axis {
            Axis::LearningRate => format!("{:e}", p.0),
            _ => format!("{}", p.0),
        })
        .collect();
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (640, 420)).into_drawing_area();
        root.fill(&WHITE).map_err(draw_err)?;
        let n = pts.len().max(1);
        let mut chart = ChartBuilder::on(&root)
            .caption(format!("Sensitivity to {}", slice.axis.label()), ("sans-serif", 20))
            .margin(16)
            .x_label_area_size(36)
            .y_label_area_size(48)
            .build_cartesian_2d(-0.5f64..(n as f64 - 0.5), 0f64..1f64)
            .map_err(draw_err)?;
        chart
            .configure_mesh()
            .x_desc(slice.axis.label())
            .y_desc("score")
            .x_labels(n)
            .x_label_formatter(&|x| {
                let i = x.round();
                if (x - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < labels.len() {
                    labels[i as usize].clone()
                } else {
                    String::new()
                }
            })
            .draw()
            .map_err(draw_err)?;
        let series: [(&str, RGBColor, fn(&(f64, f64, f64, f64)) -> f64); 3] = [
            ("micro-F1", BLUE, |p| p.1),
            ("subset accuracy", RED, |p| p.2),
            ("Jaccard accuracy", GREEN, |p| p.3),
        ];
        for (name, color, get) in series {
            let line: Vec<(f64, f64)> = pts.iter().enumerate().map(|(i, p)| (i as f64, get(p))).collect();
            chart
                .draw_series(LineSeries::new(line.clone(), color.stroke_width(2)))
                .map_err(draw_err)?
                .label(name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
            chart
                .draw_series(line.into_iter().map(|xy| Circle::new(xy, 3, color.filled())))
                .map_err(draw_err)?;
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .position(SeriesLabelPosition::LowerRight)
            .draw()
            .map_err(draw_err)?;
        root.present().map_err(draw_err)?;
    }
    Ok(svg)
}

/// Write `sensitivity_<axis>.svg` for each slice into `dir`.
pub fn write_sensitivity_svgs(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for slice in &result.slices {
        let path = dir.join(format!("sensitivity_{}.svg", slice.axis.slug()));
        std::fs::write(&path, slice_svg(result, slice)?)?;
        out.push(path);
    }
    Ok(out)
}
