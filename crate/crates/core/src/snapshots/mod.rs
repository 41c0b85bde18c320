//! Snapshot matrices and the two persistent file formats (trajectory CSV,
//! model JSON).

mod model_file;
mod trajectory_csv;

use nalgebra::DMatrix;

pub use model_file::{load_model, save_model, write_model, Model, MODEL_SCHEMA_VERSION};
pub use trajectory_csv::{
    format_number, load_system_trajectory, load_trajectory, save_trajectory, write_matrix_csv,
    write_trajectory,
};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// Consecutive-sample data matrices: column `j` of `xp` is the sample that
/// follows column `j` of `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotPair {
    pub x: DMatrix<f64>,
    pub xp: DMatrix<f64>,
    pub dt: f64,
}

impl SnapshotPair {
    pub fn new(x: DMatrix<f64>, xp: DMatrix<f64>, dt: f64) -> Result<SnapshotPair> {
        if x.shape() != xp.shape() {
            return Err(Error::DimensionMismatch(format!(
                "snapshot matrices differ in shape: {:?} vs {:?}",
                x.shape(),
                xp.shape()
            )));
        }
        if x.ncols() == 0 || x.nrows() == 0 {
            return Err(Error::InvalidArgument("empty snapshot matrices".into()));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        Ok(SnapshotPair { x, xp, dt })
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }
}

/// Splits a trajectory into `(X, X')`; recorded inputs are ignored.
pub fn build_snapshots(traj: &Trajectory) -> Result<SnapshotPair> {
    let m = traj.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples to form snapshots, got {m}"
        )));
    }
    let states = traj.states();
    SnapshotPair::new(
        states.columns(0, m - 1).into_owned(),
        states.columns(1, m - 1).into_owned(),
        traj.dt(),
    )
}
