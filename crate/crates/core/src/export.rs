//! Tidy CSV emission for predictions, reconstructions, importance tables,
//! and panels.
//!
//! Prediction and reconstruction values are written in original units (the
//! inverse log transform is applied). Extrapolation mean and standard
//! deviation are computed from the per-trial curves after inverse
//! transformation, so the error bars live in the same units as the plotted
//! curves; the one-step curve is the inverse transform of the trial mean.
//! All writers emit rows in a fixed order and rely on shortest-roundtrip
//! float formatting, so identical inputs produce identical bytes.

use std::fs::File;
use std::path::Path;

use chrono::Days;
use ndarray::ArrayView2;

use crate::data::TransformSpec;
use crate::learner::importance_metric;
use crate::predictor::PredictionEnsemble;
use crate::tensor::{DictionaryTensor, TimeSeriesPanel};
use crate::{Error, Result};

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e.to_string()))
}

/// Write the prediction table: `date, entity, case_type, kind, value` with
/// kinds `observed`, `one_step`, `extrapolated_mean`, `extrapolated_std`.
///
/// Observed rows cover the panel, one-step rows cover panel columns
/// `k..=T`, and extrapolation rows cover the `L` days after the panel.
pub fn write_prediction_csv(
    path: &Path,
    panel: &TimeSeriesPanel,
    ensemble: &PredictionEnsemble,
    transform: &TransformSpec,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["date", "entity", "case_type", "kind", "value"])
        .map_err(|e| csv_err(path, e))?;

    let t0 = panel.t0();
    let t_len = panel.num_days();
    let offset = transform.log_offset;
    let date = |day: usize| (t0 + Days::new(day as u64)).to_string();
    let inverse = |v: f64| (v.exp() - offset).max(0.0);

    let n_trials = ensemble.extrapolation_trials.shape()[0];
    let horizon = ensemble.extrapolation_trials.shape()[2];

    for (i, label) in panel.row_labels().iter().enumerate() {
        for t in 0..t_len {
            let value = inverse(panel.values()[(i, t)]);
            w.serialize((date(t), &label.entity, &label.case_type, "observed", value))
                .map_err(|e| csv_err(path, e))?;
        }
        for j in 0..ensemble.one_step.ncols() {
            let value = inverse(ensemble.one_step[(i, j)]);
            let day = ensemble.one_step_offset + j;
            w.serialize((date(day), &label.entity, &label.case_type, "one_step", value))
                .map_err(|e| csv_err(path, e))?;
        }
        // Mean and std over trials in original units.
        for l in 0..horizon {
            let values: Vec<f64> = (0..n_trials)
                .map(|n| inverse(ensemble.extrapolation_trials[(n, i, l)]))
                .collect();
            let mean = values.iter().sum::<f64>() / n_trials as f64;
            let var =
                values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_trials as f64;
            let day = t_len + l;
            w.serialize((date(day), &label.entity, &label.case_type, "extrapolated_mean", mean))
                .map_err(|e| csv_err(path, e))?;
            w.serialize((
                date(day),
                &label.entity,
                &label.case_type,
                "extrapolated_std",
                var.sqrt(),
            ))
            .map_err(|e| csv_err(path, e))?;
        }
    }
    finish(w, path)
}

/// Write the normalized importance table: `atom_index, importance`.
pub fn write_importance_csv(path: &Path, dict: &DictionaryTensor) -> Result<()> {
    let metric = importance_metric(dict);
    let mut w = writer(path)?;
    w.write_record(["atom_index", "importance"]).map_err(|e| csv_err(path, e))?;
    for (idx, &value) in metric.iter().enumerate() {
        w.serialize((idx, value)).map_err(|e| csv_err(path, e))?;
    }
    finish(w, path)
}

/// Write observed vs reconstructed values in original units:
/// `date, entity, case_type, kind, value` with kinds `observed` and
/// `reconstructed`.
pub fn write_reconstruction_csv(
    path: &Path,
    panel: &TimeSeriesPanel,
    reconstruction: ArrayView2<'_, f64>,
    transform: &TransformSpec,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["date", "entity", "case_type", "kind", "value"])
        .map_err(|e| csv_err(path, e))?;
    let t0 = panel.t0();
    let offset = transform.log_offset;
    let inverse = |v: f64| (v.exp() - offset).max(0.0);
    for (i, label) in panel.row_labels().iter().enumerate() {
        for t in 0..panel.num_days() {
            let date = (t0 + Days::new(t as u64)).to_string();
            w.serialize((
                &date,
                &label.entity,
                &label.case_type,
                "observed",
                inverse(panel.values()[(i, t)]),
            ))
            .map_err(|e| csv_err(path, e))?;
            w.serialize((
                &date,
                &label.entity,
                &label.case_type,
                "reconstructed",
                inverse(reconstruction[(i, t)]),
            ))
            .map_err(|e| csv_err(path, e))?;
        }
    }
    finish(w, path)
}

/// Write per-series relative reconstruction errors (in model space):
/// `entity, case_type, relative_error`.
pub fn write_reconstruction_summary_csv(
    path: &Path,
    panel: &TimeSeriesPanel,
    reconstruction: ArrayView2<'_, f64>,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["entity", "case_type", "relative_error"]).map_err(|e| csv_err(path, e))?;
    for (i, label) in panel.row_labels().iter().enumerate() {
        let error = relative_row_error(panel.values(), reconstruction, i);
        w.serialize((&label.entity, &label.case_type, error)).map_err(|e| csv_err(path, e))?;
    }
    finish(w, path)
}

/// Relative Frobenius error of row `i` of `reconstruction` against `observed`.
pub fn relative_row_error(
    observed: ArrayView2<'_, f64>,
    reconstruction: ArrayView2<'_, f64>,
    row: usize,
) -> f64 {
    let mut num = 0.0;
    let mut denom = 0.0;
    for t in 0..observed.ncols() {
        let diff = observed[(row, t)] - reconstruction[(row, t)];
        num += diff * diff;
        denom += observed[(row, t)] * observed[(row, t)];
    }
    if denom == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / denom).sqrt()
    }
}

/// Tidy export of a panel as-is: `date, entity, case_type, value`.
pub fn write_panel_csv(path: &Path, panel: &TimeSeriesPanel) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["date", "entity", "case_type", "value"]).map_err(|e| csv_err(path, e))?;
    let t0 = panel.t0();
    for (i, label) in panel.row_labels().iter().enumerate() {
        for t in 0..panel.num_days() {
            let date = (t0 + Days::new(t as u64)).to_string();
            w.serialize((&date, &label.entity, &label.case_type, panel.values()[(i, t)]))
                .map_err(|e| csv_err(path, e))?;
        }
    }
    finish(w, path)
}
