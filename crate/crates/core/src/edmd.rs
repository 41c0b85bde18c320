//! Extended DMD: states are lifted through a dictionary of observables and
//! the DMD machinery runs on the lifted snapshots.
//!
//! Every dictionary contains the raw states, so state estimates are read
//! back from the identity rows of the lifted reconstruction.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dmd::{self, DmdModel, RankPolicy, RANK_TOLERANCE};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::linalg::{self, C64, CVector};
use crate::snapshots::{build_snapshots, SnapshotPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    /// The raw states only (`p = n`); mostly useful as a DMD equivalence check.
    States,
    /// Constant plus all monomials up to total degree `order`.
    Polynomial,
    /// Raw states plus `sin(h·x_i)`, `cos(h·x_i)` for `h = 1..=order`.
    Fourier,
}

impl BasisKind {
    pub const NAMES: [&'static str; 3] = ["states", "polynomial", "fourier"];

    pub fn name(self) -> &'static str {
        match self {
            BasisKind::States => "states",
            BasisKind::Polynomial => "polynomial",
            BasisKind::Fourier => "fourier",
        }
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "states" => Ok(BasisKind::States),
            "polynomial" | "poly" => Ok(BasisKind::Polynomial),
            "fourier" => Ok(BasisKind::Fourier),
            other => Err(Error::InvalidArgument(format!(
                "unknown basis `{other}`; supported: {}",
                BasisKind::NAMES.join(", ")
            ))),
        }
    }
}

/// Declarative dictionary description, serialized as
/// `{"kind": "polynomial", "order": 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub order: usize,
}

impl BasisSpec {
    pub fn polynomial(order: usize) -> BasisSpec {
        BasisSpec {
            kind: BasisKind::Polynomial,
            order,
        }
    }

    pub fn fourier(order: usize) -> BasisSpec {
        BasisSpec {
            kind: BasisKind::Fourier,
            order,
        }
    }

    pub fn states() -> BasisSpec {
        BasisSpec {
            kind: BasisKind::States,
            order: 1,
        }
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            BasisKind::States => f.write_str("states"),
            BasisKind::Polynomial => write!(f, "poly:{}", self.order),
            BasisKind::Fourier => write!(f, "fourier:{}", self.order),
        }
    }
}

impl FromStr for BasisSpec {
    type Err = Error;

    /// Accepts `states`, `poly:<d>`, `polynomial:<d>` and `fourier:<q>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, order) = match s.split_once(':') {
            Some((name, order)) => (name, Some(order)),
            None => (s, None),
        };
        let kind: BasisKind = name.parse()?;
        let order = match (kind, order) {
            (BasisKind::States, None) => 1,
            (BasisKind::States, Some(_)) => {
                return Err(Error::InvalidArgument("the states basis takes no order".into()))
            }
            (_, None) => {
                return Err(Error::InvalidArgument(format!(
                    "basis `{name}` needs an order, e.g. `{name}:2`"
                )))
            }
            (_, Some(o)) => o.parse::<usize>().ok().filter(|&o| o > 0).ok_or_else(|| {
                Error::InvalidArgument(format!("basis order must be a positive integer, got `{o}`"))
            })?,
        };
        Ok(BasisSpec { kind, order })
    }
}

/// A lifting map `x ↦ Θ(x)` for states of a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    spec: BasisSpec,
    n: usize,
    /// Monomial exponents in graded-lexicographic order (polynomial only).
    exponents: Vec<Vec<u32>>,
}

/// Exponent vectors of total degree `degree` over `n` variables, in
/// descending lexicographic order.
fn monomials_of_degree(n: usize, degree: u32) -> Vec<Vec<u32>> {
    if n == 1 {
        return vec![vec![degree]];
    }
    let mut out = Vec::new();
    for first in (0..=degree).rev() {
        for mut rest in monomials_of_degree(n - 1, degree - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

impl Dictionary {
    pub fn new(spec: BasisSpec, n: usize) -> Result<Dictionary> {
        if n == 0 {
            return Err(Error::InvalidArgument("state dimension must be positive".into()));
        }
        if spec.order == 0 {
            return Err(Error::InvalidArgument("basis order must be positive".into()));
        }
        let exponents = match spec.kind {
            BasisKind::Polynomial => {
                let degree = u32::try_from(spec.order)
                    .map_err(|_| Error::InvalidArgument("polynomial degree too large".into()))?;
                (0..=degree).flat_map(|d| monomials_of_degree(n, d)).collect()
            }
            _ => Vec::new(),
        };
        Ok(Dictionary { spec, n, exponents })
    }

    pub fn polynomial(n: usize, degree: usize) -> Result<Dictionary> {
        Dictionary::new(BasisSpec::polynomial(degree), n)
    }

    pub fn fourier(n: usize, harmonics: usize) -> Result<Dictionary> {
        Dictionary::new(BasisSpec::fourier(harmonics), n)
    }

    pub fn states(n: usize) -> Dictionary {
        Dictionary::new(BasisSpec::states(), n).expect("valid states dictionary")
    }

    pub fn spec(&self) -> BasisSpec {
        self.spec
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    /// Number of observables `p`.
    pub fn lifted_dim(&self) -> usize {
        match self.spec.kind {
            BasisKind::States => self.n,
            BasisKind::Polynomial => self.exponents.len(),
            BasisKind::Fourier => self.n + 2 * self.spec.order * self.n,
        }
    }

    /// Positions of `x_1..x_n` in the lifted vector.
    pub fn state_rows(&self) -> Vec<usize> {
        match self.spec.kind {
            BasisKind::Polynomial => (1..=self.n).collect(),
            _ => (0..self.n).collect(),
        }
    }

    pub fn lift(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "dictionary expects states of length {}, got {}",
                self.n,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state to lift"));
        }
        Ok(self.lift_unchecked(x))
    }

    fn lift_unchecked(&self, x: &[f64]) -> DVector<f64> {
        let p = self.lifted_dim();
        let mut out = DVector::zeros(p);
        match self.spec.kind {
            BasisKind::States => out.copy_from_slice(x),
            BasisKind::Polynomial => {
                for (row, exps) in self.exponents.iter().enumerate() {
                    out[row] = exps
                        .iter()
                        .zip(x)
                        .filter(|(e, _)| **e > 0)
                        .map(|(&e, &v)| v.powi(e as i32))
                        .product();
                }
            }
            BasisKind::Fourier => {
                out.rows_mut(0, self.n).copy_from_slice(x);
                let mut row = self.n;
                for h in 1..=self.spec.order {
                    for &v in x {
                        let (s, c) = (h as f64 * v).sin_cos();
                        out[row] = s;
                        out[row + 1] = c;
                        row += 2;
                    }
                }
            }
        }
        out
    }

    /// Lifts every column of an n×k matrix.
    pub fn lift_columns(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.nrows() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "dictionary expects {} state rows, got {}",
                self.n,
                x.nrows()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("states to lift"));
        }
        let mut out = DMatrix::zeros(self.lifted_dim(), x.ncols());
        for j in 0..x.ncols() {
            let col = x.column(j);
            out.set_column(j, &self.lift_unchecked(col.as_slice()));
        }
        Ok(out)
    }
}

/// `(Θ(X), Θ(X'))` with the source `dt`.
pub fn lift_snapshots(dict: &Dictionary, snap: &SnapshotPair) -> Result<SnapshotPair> {
    SnapshotPair::new(dict.lift_columns(&snap.x)?, dict.lift_columns(&snap.xp)?, snap.dt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdmdModel {
    pub dictionary: Dictionary,
    /// DMD fitted on lifted snapshots; its state dimension is `p`.
    pub inner: DmdModel,
    pub state_rows: Vec<usize>,
}

impl EdmdModel {
    pub fn state_dim(&self) -> usize {
        self.dictionary.state_dim()
    }
}

pub fn fit_edmd(traj: &Trajectory, dict: &Dictionary, rank: RankPolicy) -> Result<EdmdModel> {
    if traj.dim() != dict.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "trajectory has {} states, dictionary expects {}",
            traj.dim(),
            dict.state_dim()
        )));
    }
    let snap = build_snapshots(traj)?;
    if snap.len() < 2 {
        return Err(Error::InvalidArgument(
            "EDMD needs at least 2 snapshot pairs".into(),
        ));
    }
    let lifted = lift_snapshots(dict, &snap)?;
    let mut inner = dmd::fit_dmd_guarded(&lifted, rank)?;
    inner.diagnostics.underdetermined = dict.lifted_dim() > snap.len();
    Ok(EdmdModel {
        dictionary: dict.clone(),
        inner,
        state_rows: dict.state_rows(),
    })
}

/// State estimates at `times`: the lifted reconstruction restricted to the
/// identity observables.
pub fn reconstruct_states(model: &EdmdModel, times: &[f64]) -> Result<DMatrix<f64>> {
    let lifted = dmd::reconstruct(&model.inner, times)?;
    Ok(lifted.select_rows(model.state_rows.iter()))
}

/// An approximate Koopman eigenfunction `φ(x) = Θ(x) ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanEigenpair {
    pub eigenvalue: C64,
    /// ξ, unit 2-norm.
    pub coefficients: CVector,
}

impl KoopmanEigenpair {
    pub fn evaluate(&self, dict: &Dictionary, x: &[f64]) -> Result<C64> {
        let theta = dict.lift(x)?;
        Ok(self.evaluate_lifted(theta.as_slice()))
    }

    fn evaluate_lifted(&self, theta: &[f64]) -> C64 {
        theta
            .iter()
            .zip(self.coefficients.iter())
            .map(|(t, c)| c * *t)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenfunctionSet {
    /// Descending |λ|.
    pub pairs: Vec<KoopmanEigenpair>,
    /// Set when `Θ(X)` was rank-deficient and the minimum-norm pseudoinverse
    /// dropped directions.
    pub rank_deficient: bool,
}

/// Eigenpairs of `Θ(X)⁺ Θ(X')`, where rows of `Θ(X)` are lifted samples.
///
/// This matrix is the transpose of the lifted regression operator, so its
/// right eigenvectors are that operator's left eigenvectors and give the
/// eigenfunction coefficients directly.
pub fn koopman_eigenfunctions(traj: &Trajectory, dict: &Dictionary) -> Result<EigenfunctionSet> {
    if traj.dim() != dict.state_dim() {
        return Err(Error::DimensionMismatch(format!(
            "trajectory has {} states, dictionary expects {}",
            traj.dim(),
            dict.state_dim()
        )));
    }
    let snap = build_snapshots(traj)?;
    if snap.len() < 2 {
        return Err(Error::InvalidArgument(
            "eigenfunction fit needs at least 2 snapshot pairs".into(),
        ));
    }
    let lifted = lift_snapshots(dict, &snap)?;
    let theta_x = lifted.x.transpose();
    let theta_xp = lifted.xp.transpose();
    let (pinv, rank) = linalg::pinv(&theta_x, RANK_TOLERANCE)?;
    let regression = pinv * theta_xp;
    let eig = linalg::eig_real(&regression)?;
    let pairs = eig
        .values
        .iter()
        .enumerate()
        .map(|(k, &eigenvalue)| KoopmanEigenpair {
            eigenvalue,
            coefficients: eig.vectors.column(k).into_owned(),
        })
        .collect();
    Ok(EigenfunctionSet {
        pairs,
        rank_deficient: rank < dict.lifted_dim(),
    })
}

/// `‖φ(X') − λ φ(X)‖₂ / ‖φ(X)‖₂` over the snapshot pairs of `traj`.
pub fn linearity_residual(pair: &KoopmanEigenpair, dict: &Dictionary, traj: &Trajectory) -> Result<f64> {
    let snap = build_snapshots(traj)?;
    let lifted = lift_snapshots(dict, &snap)?;
    if lifted.x.nrows() != pair.coefficients.len() {
        return Err(Error::DimensionMismatch(format!(
            "eigenfunction has {} coefficients, dictionary has {} observables",
            pair.coefficients.len(),
            lifted.x.nrows()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..lifted.len() {
        let now = pair.evaluate_lifted(lifted.x.column(j).as_slice());
        let next = pair.evaluate_lifted(lifted.xp.column(j).as_slice());
        num += (next - pair.eigenvalue * now).norm_sqr();
        den += now.norm_sqr();
    }
    Ok(num.sqrt() / den.sqrt().max(1e-300))
}
