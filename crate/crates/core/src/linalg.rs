//! Dense linear-algebra helpers shared by the identification and control code.
//!
//! nalgebra provides the real Schur form and faer the SVD; this module adds the
//! pieces it lacks for non-symmetric problems: complex eigenvectors of a real
//! matrix, phase conventions, and minimum-norm least squares.

use std::cmp::Ordering;

use nalgebra::{Complex, ComplexField, DMatrix, DVector, Schur};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Relative magnitude below which two eigenvalue moduli count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

pub fn to_complex(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| C64::new(x, 0.0))
}

/// Eigenvalues and right eigenvectors of a real square matrix.
#[derive(Debug, Clone)]
pub struct Eigen {
    /// Sorted by descending modulus, ties by descending imaginary part.
    pub values: Vec<C64>,
    /// Column `k` is the unit-norm eigenvector for `values[k]`, with its
    /// largest-magnitude entry real and positive.
    pub vectors: CMatrix,
}

/// Orders eigenvalues by descending modulus, breaking ties by descending
/// imaginary part.
pub fn eigen_order(a: &C64, b: &C64) -> Ordering {
    let (ma, mb) = (a.norm(), b.norm());
    let scale = ma.max(mb).max(1.0);
    if (ma - mb).abs() > TIE_TOLERANCE * scale {
        mb.partial_cmp(&ma).unwrap_or(Ordering::Equal)
    } else {
        b.im.partial_cmp(&a.im).unwrap_or(Ordering::Equal)
    }
}

/// Scales `v` to unit 2-norm and rotates its phase so the largest-magnitude
/// entry (first one on ties) is real and positive. Zero vectors are left alone.
pub fn normalize_phase(v: &mut CVector) {
    let norm = v.norm();
    if norm == 0.0 || !norm.is_finite() {
        return;
    }
    let mut pivot = 0;
    let mut best = -1.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best {
            best = m;
            pivot = i;
        }
    }
    let phase = v[pivot] / v[pivot].norm();
    let scale = phase.conj() / norm;
    for z in v.iter_mut() {
        *z *= scale;
    }
    v[pivot].im = 0.0;
}

/// Eigen-decomposition of a real matrix.
///
/// The real Schur form `A = Q T Qᵀ` comes from nalgebra. Each 2×2 block of
/// the quasi-triangular `T` is split by a complex Givens rotation, and the
/// eigenvectors of the resulting triangular matrix are found by
/// back-substitution. Complex eigenvalues come out as exact conjugate pairs
/// with exactly conjugate eigenvectors.
pub fn eig_real(a: &DMatrix<f64>) -> Result<Eigen> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "eigen-decomposition needs a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("eigenvalue input"));
    }
    if a.iter().all(|&x| x == 0.0) {
        return Ok(Eigen {
            values: vec![C64::new(0.0, 0.0); n],
            vectors: CMatrix::identity(n, n),
        });
    }

    let schur = Schur::try_new(a.clone(), f64::EPSILON, 10_000 + 100 * n)
        .ok_or_else(|| Error::Decomposition("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let mut q = to_complex(&q);
    let mut t = to_complex(&t);

    // Pairs (k, k+1) holding λ and conj(λ) with Im λ > 0.
    let mut pairs = Vec::new();
    let mut k = 0;
    while k < n {
        if k + 1 < n && t[(k + 1, k)].norm() != 0.0 {
            if let Some(pair) = split_block(&mut t, &mut q, k) {
                pairs.push(pair);
            }
            k += 2;
        } else {
            k += 1;
        }
    }

    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    let t_norm = t.norm();
    let small = (f64::EPSILON * t_norm).max(f64::MIN_POSITIVE);

    let mut vectors = CMatrix::zeros(n, n);
    for k in 0..n {
        let mut y = CVector::zeros(n);
        y[k] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                s += t[(i, j)] * y[j];
            }
            let mut den = t[(i, i)] - t[(k, k)];
            if den.norm() < small {
                den = C64::new(small, 0.0);
            }
            y[i] = -s / den;
            let big = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if big > 1e100 {
                y /= C64::new(big, 0.0);
            }
        }
        let mut v = &q * y;
        normalize_phase(&mut v);
        vectors.set_column(k, &v);
    }

    for &(p, c) in &pairs {
        let conj = vectors.column(p).map(|z| z.conj());
        vectors.set_column(c, &conj);
    }
    let paired: Vec<bool> = {
        let mut flags = vec![false; n];
        for &(p, c) in &pairs {
            flags[p] = true;
            flags[c] = true;
        }
        flags
    };
    for k in 0..n {
        if paired[k] || values[k].im != 0.0 {
            continue;
        }
        // A simple real eigenvalue has a real eigenvector up to phase.
        let col = vectors.column(k);
        let max_im = col.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if max_im < 1e-8 {
            for i in 0..n {
                vectors[(i, k)].im = 0.0;
            }
            let mut v = vectors.column(k).into_owned();
            normalize_phase(&mut v);
            vectors.set_column(k, &v);
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eigen_order(&values[i], &values[j]));
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let sorted_vectors = CMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);

    Ok(Eigen {
        values: sorted_values,
        vectors: sorted_vectors,
    })
}

/// Triangularizes the 2×2 diagonal block of `t` at `k` with a unitary
/// rotation, updating `q`. Returns the index pair when the block holds a
/// complex-conjugate pair.
fn split_block(t: &mut CMatrix, q: &mut CMatrix, k: usize) -> Option<(usize, usize)> {
    let n = t.nrows();
    let (a, b, c, d) = (t[(k, k)].re, t[(k, k + 1)].re, t[(k + 1, k)].re, t[(k + 1, k + 1)].re);
    let half_diff = 0.5 * (a - d);
    let disc = half_diff * half_diff + b * c;
    let mean = 0.5 * (a + d);
    let (l1, l2, complex) = if disc < 0.0 {
        let im = (-disc).sqrt();
        (C64::new(mean, im), C64::new(mean, -im), true)
    } else {
        let s = disc.sqrt();
        let (hi, lo) = if half_diff >= 0.0 {
            (mean + s, mean - s)
        } else {
            (mean - s, mean + s)
        };
        (C64::new(hi, 0.0), C64::new(lo, 0.0), false)
    };

    // Eigenvector of the block for l1, from whichever row is better scaled.
    let from_row2 = [l1 - C64::new(d, 0.0), C64::new(c, 0.0)];
    let from_row1 = [C64::new(b, 0.0), l1 - C64::new(a, 0.0)];
    let norm = |v: &[C64; 2]| (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    let v = if norm(&from_row2) >= norm(&from_row1) {
        from_row2
    } else {
        from_row1
    };
    let nv = norm(&v);
    if nv == 0.0 {
        return None;
    }
    let g1 = [v[0] / nv, v[1] / nv];
    let g2 = [-g1[1].conj(), g1[0].conj()];

    // t <- Gᴴ t on rows k, k+1.
    for j in 0..n {
        let (x, y) = (t[(k, j)], t[(k + 1, j)]);
        t[(k, j)] = g1[0].conj() * x + g1[1].conj() * y;
        t[(k + 1, j)] = g2[0].conj() * x + g2[1].conj() * y;
    }
    // t <- t G and q <- q G on columns k, k+1.
    for m in [&mut *t, &mut *q] {
        for i in 0..n {
            let (x, y) = (m[(i, k)], m[(i, k + 1)]);
            m[(i, k)] = x * g1[0] + y * g1[1];
            m[(i, k + 1)] = x * g2[0] + y * g2[1];
        }
    }
    t[(k + 1, k)] = C64::new(0.0, 0.0);
    t[(k, k)] = l1;
    t[(k + 1, k + 1)] = l2;
    complex.then_some((k, k + 1))
}

/// Thin SVD `a = u · diag(s) · v_t` with `s` descending and
/// `k = min(rows, cols)` retained triplets.
#[derive(Debug, Clone)]
pub struct ThinSvd<T: ComplexField> {
    pub u: DMatrix<T>,
    pub s: DVector<f64>,
    pub v_t: DMatrix<T>,
}

/// Scalars with an SVD backend.
pub trait SvdScalar: ComplexField<RealField = f64> {
    #[doc(hidden)]
    fn thin_svd(a: &DMatrix<Self>) -> Result<ThinSvd<Self>>;
}

// nalgebra's SVD mis-factors some rank-deficient inputs (e.g. a constant
// 4×999 snapshot matrix), so the decomposition is delegated to faer.
macro_rules! faer_svd {
    ($t:ty, $real:expr) => {
        impl SvdScalar for $t {
            fn thin_svd(a: &DMatrix<$t>) -> Result<ThinSvd<$t>> {
                let m = faer::Mat::<$t>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
                let svd = m
                    .thin_svd()
                    .map_err(|e| Error::Decomposition(format!("SVD failed: {e:?}")))?;
                let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
                let k = s.nrows();
                Ok(ThinSvd {
                    u: DMatrix::from_fn(a.nrows(), k, |i, j| u[(i, j)]),
                    s: DVector::from_fn(k, |i, _| $real(s[i])),
                    v_t: DMatrix::from_fn(k, a.ncols(), |i, j| ComplexField::conjugate(v[(j, i)])),
                })
            }
        }
    };
}

faer_svd!(f64, |x: f64| x);
faer_svd!(C64, |x: C64| x.re);

pub fn thin_svd<T: SvdScalar>(a: &DMatrix<T>) -> Result<ThinSvd<T>> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("cannot decompose an empty matrix".into()));
    }
    T::thin_svd(a)
}

/// Minimum-norm least-squares solution of `a x = b`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub solution: CVector,
    /// ‖a x − b‖₂
    pub residual: f64,
    /// Numerical rank of `a` at the requested tolerance.
    pub rank: usize,
    /// Set when singular values were discarded.
    pub rank_deficient: bool,
}

/// Solves `a x ≈ b` through the SVD, dropping singular values below
/// `rel_tol · σ_max`.
pub fn least_squares(a: &CMatrix, b: &CVector, rel_tol: f64) -> Result<LeastSquares> {
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "least squares: matrix has {} rows, right-hand side has {}",
            a.nrows(),
            b.len()
        )));
    }
    let cols = a.ncols();
    let ThinSvd { u, s: sigma, v_t } = thin_svd(a)?;
    let cutoff = rel_tol * sigma.iter().cloned().fold(0.0, f64::max);
    let mut solution = CVector::zeros(cols);
    let mut rank = 0;
    for (i, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            let coeff = u.column(i).dotc(b) / C64::new(s, 0.0);
            solution += v_t.row(i).adjoint() * coeff;
        }
    }
    let residual = (a * &solution - b).norm();
    Ok(LeastSquares {
        solution,
        residual,
        rank,
        rank_deficient: rank < cols,
    })
}

/// Moore–Penrose pseudoinverse with relative cutoff. Returns the
/// pseudoinverse and the numerical rank.
pub fn pinv<T: SvdScalar>(a: &DMatrix<T>, rel_tol: f64) -> Result<(DMatrix<T>, usize)> {
    let ThinSvd { u, s: sigma, v_t } = thin_svd(a)?;
    let cutoff = rel_tol * sigma.iter().cloned().fold(0.0, f64::max);
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    let mut rank = 0;
    for (i, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            rank += 1;
            out += v_t.row(i).adjoint() * u.column(i).adjoint() * T::from_real(1.0 / s);
        }
    }
    Ok((out, rank))
}

/// Solves the continuous Lyapunov equation `Aᵀ X + X A + C = 0` through the
/// Kronecker form. Meant for the small systems this crate controls.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let at = a.transpose();
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(Aᵀ X) = (I ⊗ Aᵀ) vec X, vec(X A) = (Aᵀ ⊗ I) vec X (column-major vec).
    let op = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = -DVector::from_column_slice(c.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Decomposition("singular Lyapunov operator".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&x + x.transpose()) * 0.5)
}
