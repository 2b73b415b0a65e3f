//! Small dense linear-algebra helpers: Lyapunov equations, spectra, norms.
//!
//! Every matrix handled here is tiny (state dimension ≤ a handful), so the
//! Lyapunov solver uses the Kronecker form directly.

use nalgebra::{Complex, DMatrix, DVector};

use crate::{Error, Result};

/// Solves `AᵀX + XA = -Q` for symmetric `X`.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::Linalg(format!(
            "lyapunov: expected square {n}x{n} operands"
        )));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let op = id.kronecker(&at) + at.kronecker(&id);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Linalg("lyapunov operator is singular".into()))?;
    let x = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(symmetrize(&x))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

/// Largest real part of the spectrum (`-inf` for an empty matrix).
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_hurwitz(m: &DMatrix<f64>) -> bool {
    spectral_abscissa(m) < 0.0
}

/// `(λ_min, λ_max)` of a symmetric matrix.
pub fn symmetric_eig_bounds(m: &DMatrix<f64>) -> (f64, f64) {
    if m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = symmetrize(m).symmetric_eigenvalues();
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().min()
}

/// Central finite-difference Jacobian of `f` at `x`.
pub fn fd_jacobian<F>(f: F, x: &DVector<f64>, step: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.clone();
    for j in 0..n {
        let orig = xp[j];
        xp[j] = orig + step;
        let fp = f(&xp);
        xp[j] = orig - step;
        let fm = f(&xp);
        xp[j] = orig;
        jac.set_column(j, &((fp - fm) / (2.0 * step)));
    }
    jac
}

/// Residual `AᵀP + PA − (1/ε)PBBᵀP + CᵀC` of the continuous algebraic Riccati equation.
pub fn care_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    epsilon: f64,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    a.transpose() * p + p * a - p * b * b.transpose() * p / epsilon + c.transpose() * c
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}
