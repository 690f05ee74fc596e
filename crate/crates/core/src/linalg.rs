//! Small dense linear-algebra helpers shared by the estimators and the bound engine.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Singular values in descending order (empty for an empty matrix).
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank: singular values at or below `max(rows, cols) * eps * s_max` count as zero.
pub fn numeric_rank(m: &DMatrix<f64>) -> usize {
    numeric_rank_scaled(m, 0.0, 0)
}

/// Numerical rank for a matrix computed from larger data: the threshold uses
/// `max(s_max, scale)` and at least `dim` for the size factor, so that rounding
/// left over from cancellation is not mistaken for signal.
pub fn numeric_rank_scaled(m: &DMatrix<f64>, scale: f64, dim: usize) -> usize {
    let s = singular_values(m);
    let Some(&smax) = s.first() else { return 0 };
    if smax == 0.0 || !smax.is_finite() {
        return 0;
    }
    let size = m.nrows().max(m.ncols()).max(dim) as f64;
    let tol = size * f64::EPSILON * smax.max(scale);
    s.iter().filter(|&&v| v > tol).count()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

/// Ratio of extreme singular values; infinite when the smallest is zero.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let sym = symmetrize(m);
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Inverse principal square root of a symmetric positive-definite matrix.
///
/// Eigenvalues below `1e-12 * lambda_max` are rejected rather than clipped.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let lmax = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(lmax > 0.0) || lmin <= 1e-12 * lmax {
        return Err(Error::DegenerateMoment(format!(
            "eigenvalues span [{lmin:e}, {lmax:e}], below the 1e-12 relative floor"
        )));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(symmetrize(&(&eig.eigenvectors * d * eig.eigenvectors.transpose())))
}

/// `[A^0, A^1, ..., A^max_power]`.
pub fn powers(a: &DMatrix<f64>, max_power: usize) -> Vec<DMatrix<f64>> {
    let n = a.nrows();
    let mut out = Vec::with_capacity(max_power + 1);
    out.push(DMatrix::identity(n, n));
    for i in 1..=max_power {
        let next = &out[i - 1] * a;
        out.push(next);
    }
    out
}

/// Solve `X * m = b` for `X` with `m` symmetric positive definite, falling back to LU.
pub fn right_solve_spd(b: &DMatrix<f64>, m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let bt = b.transpose();
    let sol = match m.clone().cholesky() {
        Some(ch) => ch.solve(&bt),
        None => m.clone().lu().solve(&bt)?,
    };
    Some(sol.transpose())
}
