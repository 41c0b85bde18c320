//! Exact dynamic mode decomposition.
//!
//! The snapshot regression `X' ≈ A X` is solved in the span of the leading
//! left singular vectors of `X`: `Ã = Uᵀ X' V Σ⁻¹`. The eigenpairs
//! `Ã W = W Λ` lift back to exact modes `Φ = X' V Σ⁻¹ W`, and the data is
//! reconstructed as `x(t) ≈ Φ exp(Ω t) b` with `Ω = ln(Λ)/Δt` and `b` the
//! least-squares expansion of the first snapshot in the modes.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, C64, CMatrix, CVector, LeastSquares};
use crate::snapshots::SnapshotPair;

/// Relative singular-value cutoff used by [`RankPolicy::Auto`] and by the
/// least-squares mode expansions.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Eigenvalues with modulus below this have no continuous-time counterpart.
pub const ZERO_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankPolicy {
    /// Keep every singular value above `RANK_TOLERANCE · σ₁`.
    #[default]
    Auto,
    Explicit(usize),
}

impl fmt::Display for RankPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankPolicy::Auto => f.write_str("auto"),
            RankPolicy::Explicit(r) => write!(f, "{r}"),
        }
    }
}

impl FromStr for RankPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(RankPolicy::Auto);
        }
        match s.parse::<usize>() {
            Ok(r) if r > 0 => Ok(RankPolicy::Explicit(r)),
            _ => Err(Error::InvalidArgument(format!(
                "rank must be `auto` or a positive integer, got `{s}`"
            ))),
        }
    }
}

/// Thin SVD of a snapshot matrix truncated to `rank` terms.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// n×r
    pub u: DMatrix<f64>,
    /// r singular values, descending.
    pub s: DVector<f64>,
    /// (m−1)×r
    pub v: DMatrix<f64>,
    pub rank: usize,
    /// Singular values that were dropped.
    pub discarded: Vec<f64>,
}

impl SvdFactors {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.s) * self.v.transpose()
    }
}

pub fn truncated_svd(x: &DMatrix<f64>, rank: RankPolicy) -> Result<SvdFactors> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("cannot decompose an empty matrix".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("snapshot matrix"));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::Degenerate("snapshot matrix is identically zero".into()));
    }
    let full = x.nrows().min(x.ncols());
    let linalg::ThinSvd { u, s: sigma, v_t } = linalg::thin_svd(x)?;
    let r = match rank {
        RankPolicy::Auto => {
            let cutoff = RANK_TOLERANCE * sigma[0];
            sigma.iter().take_while(|&&s| s > cutoff).count()
        }
        RankPolicy::Explicit(r) => {
            if r == 0 || r > full {
                return Err(Error::InvalidArgument(format!(
                    "rank {r} outside 1..={full} for a {}x{} snapshot matrix",
                    x.nrows(),
                    x.ncols()
                )));
            }
            if sigma[r - 1] <= 0.0 {
                return Err(Error::Degenerate(format!(
                    "singular value {r} is zero; the data has lower rank"
                )));
            }
            r
        }
    };
    Ok(SvdFactors {
        u: u.columns(0, r).into_owned(),
        s: sigma.rows(0, r).into_owned(),
        v: v_t.rows(0, r).transpose(),
        rank: r,
        discarded: sigma.iter().skip(r).cloned().collect(),
    })
}

/// Non-fatal conditions recorded while fitting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Indices of modes whose eigenvalue is numerically zero; they carry no
    /// continuous-time eigenvalue and are left out of reconstructions.
    pub excluded_modes: Vec<usize>,
    /// Set when the amplitude solve dropped singular values of Φ.
    pub amplitudes_rank_deficient: bool,
    /// ‖Φ b − x₁‖₂
    pub amplitude_residual: f64,
    /// Largest columnwise ‖Ã w − λ w‖₂.
    pub eigen_residual: f64,
    /// Singular values of X dropped by the rank policy.
    pub discarded_singular_values: usize,
    /// Explicit rank requested but reduced to the numerical rank.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requested_rank: Option<usize>,
    /// More observables than snapshot pairs (regression is underdetermined).
    #[serde(default)]
    pub underdetermined: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmdModel {
    pub rank: usize,
    pub dt: f64,
    /// r×r reduced operator.
    pub a_tilde: DMatrix<f64>,
    /// Discrete eigenvalues Λ, descending modulus.
    pub eigenvalues: Vec<C64>,
    /// Eigenvectors W of `a_tilde`, r×r.
    pub eigenvectors: CMatrix,
    /// Exact DMD modes Φ, n×r, unit columns.
    pub modes: CMatrix,
    /// Ω = ln(Λ)/Δt, `None` for zero eigenvalues.
    pub continuous_eigenvalues: Vec<Option<C64>>,
    /// Amplitudes b.
    pub amplitudes: CVector,
    /// Projection basis U, n×r.
    pub projection: DMatrix<f64>,
    /// Retained singular values of X.
    pub singular_values: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl DmdModel {
    pub fn dim(&self) -> usize {
        self.modes.nrows()
    }

    /// One-step map `Φ diag(Λ) Φ⁺` in state coordinates.
    pub fn operator(&self) -> Result<CMatrix> {
        let lambda = CMatrix::from_diagonal(&CVector::from_column_slice(&self.eigenvalues));
        Ok(&self.modes * lambda * linalg::pinv(&self.modes, RANK_TOLERANCE)?.0)
    }

    /// `Φ diag(Λ) c(x)`: the model's prediction of the sample after `x`.
    pub fn predict_step(&self, x: &DVector<f64>) -> Result<CVector> {
        let c = mode_coefficients(self, x)?.solution;
        let scaled = CVector::from_iterator(
            c.len(),
            c.iter().zip(&self.eigenvalues).map(|(ci, l)| ci * l),
        );
        Ok(&self.modes * scaled)
    }
}

pub fn fit_dmd(snap: &SnapshotPair, rank: RankPolicy) -> Result<DmdModel> {
    let svd = truncated_svd(&snap.x, rank)?;
    fit_from_svd(snap, svd)
}

/// Fits with the conditioning guard: an explicit rank is lowered to the
/// numerical rank rather than inverting negligible singular values.
pub(crate) fn fit_dmd_guarded(snap: &SnapshotPair, rank: RankPolicy) -> Result<DmdModel> {
    let auto = truncated_svd(&snap.x, RankPolicy::Auto)?;
    let (svd, requested) = match rank {
        RankPolicy::Explicit(r) if r > auto.rank => {
            let full = snap.x.nrows().min(snap.x.ncols());
            if r > full {
                return Err(Error::InvalidArgument(format!(
                    "rank {r} outside 1..={full} for a {}x{} snapshot matrix",
                    snap.x.nrows(),
                    snap.x.ncols()
                )));
            }
            (auto, Some(r))
        }
        RankPolicy::Explicit(r) => (truncated_svd(&snap.x, RankPolicy::Explicit(r))?, None),
        RankPolicy::Auto => (auto, None),
    };
    let mut model = fit_from_svd(snap, svd)?;
    model.diagnostics.requested_rank = requested;
    Ok(model)
}

fn fit_from_svd(snap: &SnapshotPair, svd: SvdFactors) -> Result<DmdModel> {
    if snap.xp.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("shifted snapshot matrix"));
    }
    let r = svd.rank;
    let s_inv = DMatrix::from_diagonal(&svd.s.map(|s| 1.0 / s));
    // X' V Σ⁻¹ is shared by the reduced operator and the exact modes.
    let lifted = &snap.xp * &svd.v * s_inv;
    let a_tilde = svd.u.transpose() * &lifted;

    let eig = linalg::eig_real(&a_tilde)?;
    let mut eigenvalues = eig.values;
    for l in eigenvalues.iter_mut() {
        // -0.0 would put ln(λ) for negative real λ on the wrong branch.
        if l.im == 0.0 {
            l.im = 0.0;
        }
    }
    let w = eig.vectors;

    let a_c = linalg::to_complex(&a_tilde);
    let eigen_residual = (0..r)
        .map(|k| {
            let col = w.column(k);
            (&a_c * col - col * eigenvalues[k]).norm()
        })
        .fold(0.0, f64::max);

    let mut modes = linalg::to_complex(&lifted) * &w;
    let projected = linalg::to_complex(&svd.u) * &w;
    for k in 0..r {
        let mut col = modes.column(k).into_owned();
        if col.norm() <= f64::EPSILON * lifted.norm() {
            // Exact modes vanish for λ = 0; fall back to the projected mode.
            col = projected.column(k).into_owned();
        }
        linalg::normalize_phase(&mut col);
        modes.set_column(k, &col);
    }

    let mut excluded = Vec::new();
    let continuous: Vec<Option<C64>> = eigenvalues
        .iter()
        .enumerate()
        .map(|(k, l)| {
            if l.norm() < ZERO_EIGENVALUE {
                excluded.push(k);
                None
            } else {
                Some(l.ln() / snap.dt)
            }
        })
        .collect();
    if excluded.len() == r {
        return Err(Error::Degenerate("all DMD eigenvalues are zero".into()));
    }

    let x1 = snap.x.column(0).into_owned();
    let amps = expand(&modes, &x1)?;

    Ok(DmdModel {
        rank: r,
        dt: snap.dt,
        a_tilde,
        eigenvalues,
        eigenvectors: w,
        modes,
        continuous_eigenvalues: continuous,
        amplitudes: amps.solution,
        projection: svd.u,
        singular_values: svd.s.iter().cloned().collect(),
        diagnostics: Diagnostics {
            excluded_modes: excluded,
            amplitudes_rank_deficient: amps.rank_deficient,
            amplitude_residual: amps.residual,
            eigen_residual,
            discarded_singular_values: svd.discarded.len(),
            requested_rank: None,
            underdetermined: false,
        },
    })
}

fn expand(modes: &CMatrix, x: &DVector<f64>) -> Result<LeastSquares> {
    if x.len() != modes.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "state has length {}, modes have {} rows",
            x.len(),
            modes.nrows()
        )));
    }
    linalg::least_squares(modes, &x.map(|v| C64::new(v, 0.0)), RANK_TOLERANCE)
}

/// Least-squares amplitudes `b` with `Φ b ≈ x₁`.
pub fn amplitudes(modes: &CMatrix, x1: &DVector<f64>) -> Result<LeastSquares> {
    expand(modes, x1)
}

/// Coordinates of a measurement in the DMD modes, `Φ c ≈ x`.
pub fn mode_coefficients(model: &DmdModel, x: &DVector<f64>) -> Result<LeastSquares> {
    expand(&model.modes, x)
}

/// `Σ_k φ_k exp(ω_k t) b_k` at each time, one column per time.
///
/// Modes without a continuous eigenvalue are skipped. The imaginary part of
/// every entry must stay below `1e-6·(1 + |value|)`; it is then dropped.
pub fn reconstruct(model: &DmdModel, times: &[f64]) -> Result<DMatrix<f64>> {
    let active: Vec<usize> = (0..model.rank)
        .filter(|&k| model.continuous_eigenvalues[k].is_some())
        .collect();
    if active.is_empty() {
        return Err(Error::Degenerate("no mode has a continuous eigenvalue".into()));
    }
    let n = model.dim();
    let mut out = DMatrix::zeros(n, times.len());
    for (j, &t) in times.iter().enumerate() {
        if !t.is_finite() {
            return Err(Error::NonFinite("reconstruction time"));
        }
        let mut acc = CVector::zeros(n);
        for &k in &active {
            let omega = model.continuous_eigenvalues[k].expect("active mode");
            let weight = (omega * t).exp() * model.amplitudes[k];
            acc += model.modes.column(k) * weight;
        }
        for i in 0..n {
            let z = acc[i];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(Error::NonFinite("reconstruction"));
            }
            if z.im.abs() >= 1e-6 * (1.0 + z.re.abs()) {
                return Err(Error::Degenerate(format!(
                    "reconstruction has imaginary residue {:e} at t = {t}",
                    z.im
                )));
            }
            out[(i, j)] = z.re;
        }
    }
    Ok(out)
}

/// `‖X' − Φ diag(Λ) C‖_F` with `C` the mode coefficients of the columns of `X`.
pub fn one_step_residual(model: &DmdModel, snap: &SnapshotPair) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..snap.len() {
        let pred = model.predict_step(&snap.x.column(j).into_owned())?;
        let actual = snap.xp.column(j);
        for i in 0..pred.len() {
            total += (pred[i] - C64::new(actual[i], 0.0)).norm_sqr();
        }
    }
    Ok(total.sqrt())
}
