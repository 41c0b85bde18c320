//! Linearization at equilibria and continuous-time LQR design.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{cartpole_gravity, sin_cos_reduced, FeedbackLaw, System};
use crate::error::{Error, Result};
use crate::linalg::{self, C64, CMatrix};

/// Largest `‖f(x_eq, 0)‖∞` accepted as an equilibrium.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-8;

/// Jacobians of a plant about an equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedModel {
    /// n×n state Jacobian.
    pub a: DMatrix<f64>,
    /// n×l input Jacobian.
    pub b: DMatrix<f64>,
    pub x_eq: DVector<f64>,
}

/// Analytic Jacobians of `system` at the equilibrium `x_eq` under zero input.
pub fn linearize(system: &System, x_eq: &[f64]) -> Result<LinearizedModel> {
    system.validate()?;
    let f = system.deriv(x_eq, 0.0)?;
    let residual = f.amax();
    if residual > EQUILIBRIUM_TOLERANCE {
        return Err(Error::NotEquilibrium {
            residual,
            tolerance: EQUILIBRIUM_TOLERANCE,
        });
    }
    let (a, b) = match system {
        System::Pendulum(p) => {
            let (_, c) = sin_cos_reduced(x_eq[0]);
            let l = p.length;
            (
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, p.gravity / l * c, 0.0]),
                DMatrix::from_row_slice(2, 1, &[0.0, 1.0 / (p.mass * l * l)]),
            )
        }
        System::CartPole(p) => {
            // At an equilibrium θ̇ = 0 and sin θ = 0, which removes every
            // term carrying the numerators' θ-derivative of the denominator.
            let (m, big_m, l, g) = (p.pole_mass, p.cart_mass, p.length, cartpole_gravity(p));
            let (_, c) = sin_cos_reduced(x_eq[2]);
            let a = DMatrix::from_row_slice(
                4,
                4,
                &[
                    0.0, 1.0, 0.0, 0.0, //
                    0.0, 0.0, -m * g * c * c / big_m, 0.0, //
                    0.0, 0.0, 0.0, 1.0, //
                    0.0, 0.0, (m + big_m) * g * c / (l * big_m), 0.0,
                ],
            );
            let b = DMatrix::from_row_slice(4, 1, &[0.0, 1.0 / big_m, 0.0, -c / (l * big_m)]);
            (a, b)
        }
    };
    Ok(LinearizedModel {
        a,
        b,
        x_eq: DVector::from_column_slice(x_eq),
    })
}

/// Diagonal LQR weights.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl LqrWeights {
    pub fn diagonal(q: &[f64], r: &[f64]) -> Result<LqrWeights> {
        if q.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "state weights must be finite and non-negative, got {q:?}"
            )));
        }
        if r.is_empty() || r.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "control weights must be finite and positive, got {r:?}"
            )));
        }
        Ok(LqrWeights {
            q: DMatrix::from_diagonal(&DVector::from_column_slice(q)),
            r: DMatrix::from_diagonal(&DVector::from_column_slice(r)),
        })
    }
}

/// Frobenius norm of `AᵀP + PA − PBR⁻¹BᵀP + Q`.
pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let r_inv = r.clone().try_inverse().unwrap_or_else(|| DMatrix::from_element(r.nrows(), r.ncols(), f64::NAN));
    (a.transpose() * p + p * a - p * b * r_inv * b.transpose() * p + q).norm()
}

/// Stabilizing solution of the continuous algebraic Riccati equation.
///
/// The stable invariant subspace of the Hamiltonian gives a first estimate,
/// which Newton–Kleinman iterations then polish. The returned `P` meets
/// `‖AᵀP + PA − PBR⁻¹BᵀP + Q‖_F < 1e-8·(1 + ‖P‖_F)`.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::DimensionMismatch("A must be square and non-empty".into()));
    }
    if b.nrows() != n || b.ncols() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "B must have {n} rows and at least one column, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    let l = b.ncols();
    if q.shape() != (n, n) || r.shape() != (l, l) {
        return Err(Error::DimensionMismatch(format!(
            "Q must be {n}x{n} and R {l}x{l}"
        )));
    }
    if (q - q.transpose()).amax() > 1e-12 * (1.0 + q.amax()) {
        return Err(Error::InvalidArgument("Q must be symmetric".into()));
    }
    let r_inv = r
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("R must be positive definite".into()))?
        .inverse();

    let p0 = match hamiltonian_estimate(a, b, q, &r_inv) {
        Ok(p) => p,
        Err(e) => {
            // The eigenvector basis can be singular even when a solution
            // exists; a Hurwitz A lets Newton start from K = 0 instead.
            let hurwitz = linalg::eig_real(a)?.values.iter().all(|z| z.re < 0.0);
            if !hurwitz {
                return Err(e);
            }
            newton_step(a, b, q, r, &DMatrix::zeros(l, n))?
        }
    };

    let mut p = p0;
    for _ in 0..50 {
        let k = &r_inv * b.transpose() * &p;
        let next = newton_step(a, b, q, r, &k)?;
        let change = (&next - &p).norm();
        p = next;
        if change <= 1e-14 * (1.0 + p.norm()) {
            break;
        }
    }

    let residual = care_residual(a, b, q, r, &p);
    if !residual.is_finite() || residual >= 1e-8 * (1.0 + p.norm()) {
        return Err(Error::Riccati(format!(
            "iteration did not converge (residual {residual:e})"
        )));
    }
    let k = &r_inv * b.transpose() * &p;
    let worst = max_real_eigenvalue(&(a - b * k))?;
    if worst >= 0.0 {
        return Err(Error::Riccati(format!(
            "solution is not stabilizing (closed-loop eigenvalue real part {worst:e}); \
             (A, B) not stabilizable"
        )));
    }
    Ok(p)
}

fn hamiltonian_estimate(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let g = b * r_inv * b.transpose();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let eig = linalg::eig_real(&h)?;
    let scale = 1.0 + h.amax();
    if eig.values.iter().any(|z| z.re.abs() <= 1e-9 * scale) {
        return Err(Error::Riccati(
            "Hamiltonian has eigenvalues on the imaginary axis: \
             (A, B) not stabilizable or (A, Q) not detectable"
                .into(),
        ));
    }
    let stable: Vec<usize> = (0..2 * n).filter(|&i| eig.values[i].re < 0.0).collect();
    if stable.len() != n {
        return Err(Error::Riccati(format!(
            "expected {n} stable Hamiltonian eigenvalues, found {}",
            stable.len()
        )));
    }
    let basis = CMatrix::from_fn(2 * n, n, |i, j| eig.vectors[(i, stable[j])]);
    let x1 = basis.rows(0, n).into_owned();
    let x2 = basis.rows(n, n).into_owned();
    // P X1 = X2  ⇔  X1ᵀ Pᵀ = X2ᵀ
    let pt = x1
        .transpose()
        .lu()
        .solve(&x2.transpose())
        .ok_or_else(|| Error::Riccati("stable invariant subspace basis is singular".into()))?;
    let p = pt.transpose().map(|z: C64| z.re);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Riccati("stable invariant subspace basis is singular".into()));
    }
    Ok((&p + p.transpose()) * 0.5)
}

/// Solves `(A − BK)ᵀP + P(A − BK) + Q + KᵀRK = 0` for `P`.
fn newton_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    k: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let closed = a - b * k;
    let c = q + k.transpose() * r * k;
    linalg::solve_lyapunov(&closed, &c)
}

fn max_real_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    Ok(linalg::eig_real(m)?
        .values
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Constant set-point state feedback `u = −K (x − x_ref)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrController {
    /// l×n gain.
    pub k: DMatrix<f64>,
    pub x_ref: DVector<f64>,
    /// Riccati solution the gain came from.
    pub p: DMatrix<f64>,
    /// Eigenvalues of `A − BK`.
    pub closed_loop: Vec<C64>,
}

impl LqrController {
    pub fn output(&self, x: &DVector<f64>) -> DVector<f64> {
        -(&self.k * (x - &self.x_ref))
    }
}

impl FeedbackLaw for LqrController {
    fn control(&self, state: &DVector<f64>) -> f64 {
        self.output(state)[0]
    }
}

/// `K = R⁻¹BᵀP` for the linearized plant.
pub fn lqr_gain(
    model: &LinearizedModel,
    weights: &LqrWeights,
    x_ref: &[f64],
) -> Result<LqrController> {
    let n = model.a.nrows();
    if x_ref.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "reference has length {}, system has {n} states",
            x_ref.len()
        )));
    }
    if x_ref.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("reference state"));
    }
    let p = solve_care(&model.a, &model.b, &weights.q, &weights.r)?;
    let r_inv = weights
        .r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("R must be invertible".into()))?;
    let k = r_inv * model.b.transpose() * &p;
    let closed_loop = linalg::eig_real(&(&model.a - &model.b * &k))?.values;
    Ok(LqrController {
        k,
        x_ref: DVector::from_column_slice(x_ref),
        p,
        closed_loop,
    })
}
