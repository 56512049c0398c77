//! Prediction error measures.

use nalgebra::DMatrix;

use crate::calibration::SnapshotSeries;
use crate::error::{dimension, invalid, Result};

/// `‖X̂ − X‖_F / ‖X‖_F`.
pub fn relative_error(predicted: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    if predicted.shape() != truth.shape() {
        return dimension(format!(
            "prediction is {:?}, ground truth is {:?}",
            predicted.shape(),
            truth.shape()
        ));
    }
    let norm = truth.norm();
    if norm == 0.0 {
        return invalid("ground truth has zero norm");
    }
    Ok((predicted - truth).norm() / norm)
}

/// Error of the no-change predictor, `‖X(t) − X(t−1)‖_F / ‖X(t)‖_F`, for every
/// consecutive pair of the series.
pub fn upper_bound_series(series: &SnapshotSeries) -> Result<Vec<f64>> {
    if series.len() < 2 {
        return invalid("upper bound needs at least two snapshots");
    }
    series
        .snapshots()
        .windows(2)
        .map(|w| relative_error(w[0].values(), w[1].values()))
        .collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len().max(1) as f64
}
