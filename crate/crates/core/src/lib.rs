//! Koopman operator approximation from trajectory data.
//!
//! Simulates the inverted pendulum and cart-pole, designs LQR controllers on
//! their linearizations, and fits DMD and EDMD models to the resulting
//! snapshots.

pub mod control;
pub mod dmd;
pub mod dynamics;
pub mod edmd;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod snapshots;

pub use control::{lqr_gain, linearize, solve_care, LinearizedModel, LqrController, LqrWeights};
pub use dmd::{fit_dmd, reconstruct, DmdModel, RankPolicy};
pub use dynamics::{
    simulate, CartPoleParams, FeedbackLaw, PendulumParams, System, SystemKind, Trajectory,
};
pub use edmd::{fit_edmd, koopman_eigenfunctions, BasisKind, BasisSpec, Dictionary, EdmdModel};
pub use error::{Error, Result};
pub use linalg::C64;
pub use metrics::{compare, ErrorReport};
pub use snapshots::{build_snapshots, Model, SnapshotPair};
