//! Reconstruction error statistics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// Per-state error summary of a reconstruction against a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub per_state_rmse: Vec<f64>,
    /// RMSE divided by the reference RMS over the whole window; 0 when the
    /// reference RMS is below 1e-300.
    pub relative_rmse: Vec<f64>,
    /// `reconstruction − reference`, one row per state.
    pub pointwise: Vec<Vec<f64>>,
    pub max_abs: Vec<f64>,
}

impl ErrorReport {
    pub fn max_relative_rmse(&self) -> f64 {
        self.relative_rmse.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mean_relative_rmse(&self) -> f64 {
        self.relative_rmse.iter().sum::<f64>() / self.relative_rmse.len().max(1) as f64
    }
}

pub fn compare(reference: &Trajectory, reconstruction: &DMatrix<f64>) -> Result<ErrorReport> {
    compare_matrices(reference.states(), reconstruction)
}

/// Both inputs are n×m with one sample per column.
pub fn compare_matrices(reference: &DMatrix<f64>, reconstruction: &DMatrix<f64>) -> Result<ErrorReport> {
    if reference.shape() != reconstruction.shape() {
        return Err(Error::DimensionMismatch(format!(
            "reference is {}x{}, reconstruction is {}x{}",
            reference.nrows(),
            reference.ncols(),
            reconstruction.nrows(),
            reconstruction.ncols()
        )));
    }
    if reference.ncols() == 0 {
        return Err(Error::InvalidArgument("no samples to compare".into()));
    }
    if reference.iter().chain(reconstruction.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("compared values"));
    }
    let m = reference.ncols() as f64;
    let diff = reconstruction - reference;
    let mut report = ErrorReport {
        per_state_rmse: Vec::with_capacity(diff.nrows()),
        relative_rmse: Vec::with_capacity(diff.nrows()),
        pointwise: Vec::with_capacity(diff.nrows()),
        max_abs: Vec::with_capacity(diff.nrows()),
    };
    for i in 0..diff.nrows() {
        let row = diff.row(i);
        let rmse = (row.iter().map(|e| e * e).sum::<f64>() / m).sqrt();
        let ref_rms = (reference.row(i).iter().map(|v| v * v).sum::<f64>() / m).sqrt();
        report.per_state_rmse.push(rmse);
        report
            .relative_rmse
            .push(if ref_rms < 1e-300 { 0.0 } else { rmse / ref_rms });
        report.pointwise.push(row.iter().cloned().collect());
        report.max_abs.push(row.iter().map(|e| e.abs()).fold(0.0, f64::max));
    }
    Ok(report)
}
