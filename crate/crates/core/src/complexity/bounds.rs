//! Spectral bounds on `A` and the quantities derived from them.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::pipeline::{IndexFamily, Tag};
use crate::sim::NoiseVariances;

/// Bounds on singular values of `A` and of its power differences over a horizon `k..=p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    /// Lower bound on `sigma_min(A)`.
    pub sigma_min_a: f64,
    /// Lower bound on `sigma_min(A^j - I)` for lags `j` in `1..=p-k`.
    pub sigma_min_diff: f64,
    /// Upper bound on `||A||`.
    pub sigma_max_a: f64,
    /// Upper bound on `||A^{k-1} - A^{m-1}||` for `m` in `k+1..=p`.
    pub sigma_max_diff: f64,
}

impl SpectralBounds {
    /// Tight values computed from `A` itself.
    pub fn exact(a: &DMatrix<f64>, k: usize, p: usize) -> Self {
        let pw = linalg::powers(a, p);
        let n = a.nrows();
        let id = DMatrix::<f64>::identity(n, n);
        let sigma_min_diff = (1..=p - k)
            .map(|j| linalg::min_singular_value(&(&pw[j] - &id)))
            .fold(f64::INFINITY, f64::min);
        let sigma_max_diff = (k + 1..=p)
            .map(|m| linalg::spectral_norm(&(&pw[k - 1] - &pw[m - 1])))
            .fold(0.0, f64::max);
        Self {
            sigma_min_a: linalg::min_singular_value(a),
            sigma_min_diff,
            sigma_max_a: linalg::spectral_norm(a),
            sigma_max_diff,
        }
    }

    /// Bounds implied by an upper bound on `||A||` alone.
    pub fn from_norm_bound(sigma_max_a: f64, k: usize, p: usize) -> Self {
        let s = sigma_max_a;
        let far = s.powi(k as i32 - 1) + s.powi(k as i32).max(s.powi(p as i32 - 1));
        Self { sigma_min_a: 0.0, sigma_min_diff: 0.0, sigma_max_a, sigma_max_diff: far }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.sigma_min_a, self.sigma_min_diff, self.sigma_max_a, self.sigma_max_diff];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(format!("spectral bounds must be finite and nonnegative: {self:?}")));
        }
        if self.sigma_min_a > self.sigma_max_a {
            return Err(Error::Config("sigma_min_a exceeds sigma_max_a".into()));
        }
        Ok(())
    }
}

/// Lower bound on the smallest eigenvalue of `E[(r(r0) - r(q)) (..)^T]`.
///
/// Pairs with `q > 2 r0 - 1` also collect process noise from the middle of the window.
pub fn f_value(b: &SpectralBounds, v: &NoiseVariances, r0: usize, q: usize) -> f64 {
    let s = b.sigma_min_a.powi(2 * (r0 as i32 - 1));
    let base = s * b.sigma_min_diff.powi(2) * v.sigma_i2 + 2.0 * v.sigma_o2;
    if q > 2 * r0 - 1 {
        base + s * v.sigma_p2
    } else {
        base
    }
}

/// `(f1, f2)` at start time `k`: with and without the process-noise term.
pub fn f_pair(b: &SpectralBounds, v: &NoiseVariances, k: usize) -> (f64, f64) {
    let s = b.sigma_min_a.powi(2 * (k as i32 - 1));
    let f2 = s * b.sigma_min_diff.powi(2) * v.sigma_i2 + 2.0 * v.sigma_o2;
    (f2 + s * v.sigma_p2, f2)
}

/// `sum_{i=lo}^{hi} s^i`, zero when `hi < lo`.
fn power_sum(s: f64, lo: i64, hi: i64) -> f64 {
    if hi < lo {
        return 0.0;
    }
    (lo..=hi).map(|i| s.powi(i as i32)).sum()
}

/// `(s^lo - s^hi) / (1 - s)`, falling back to the finite sum near `s = 1` or when negative.
fn geometric_gap(s: f64, lo: i64, hi: i64) -> f64 {
    if (s - 1.0).abs() < 1e-9 {
        return power_sum(s, lo, hi - 1);
    }
    let closed = (s.powi(lo as i32) - s.powi(hi as i32)) / (1.0 - s);
    if closed < 0.0 {
        power_sum(s, lo, hi - 1)
    } else {
        closed
    }
}

/// Upper bound on the norm of the noise-to-data map over horizon `k..=p`.
pub fn g_factor(b: &SpectralBounds, k: usize, p: usize) -> f64 {
    let s = b.sigma_max_a;
    let (k, p) = (k as i64, p as i64);
    let first = (k..p).map(|q| geometric_gap(s, 1, q - 1)).fold(0.0, f64::max);
    let second = if p - 1 > k { geometric_gap(s, k - 1, p - 2) } else { 0.0 };
    1.0 + b.sigma_max_diff + first + second
}

/// Per-pair lower bounds `f` and their sum.
pub fn f_table(b: &SpectralBounds, v: &NoiseVariances, family: &IndexFamily) -> Vec<(Tag, f64)> {
    family.tags().into_iter().map(|(m, q)| ((m, q), f_value(b, v, m, q))).collect()
}

/// Covariance bounds of the centred offset-step estimate, available when `A` is known.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetCovariance {
    pub c_under: DMatrix<f64>,
    pub c_over: DMatrix<f64>,
    pub h_under: f64,
    pub h_over: f64,
}

/// Unit step that is one only for strictly positive arguments.
fn unit_step(i: i64) -> bool {
    i > 0
}

pub fn offset_covariance(a: &DMatrix<f64>, v: &NoiseVariances, k: usize, p: usize) -> OffsetCovariance {
    let n = a.nrows();
    let l = (p - k) as f64;
    let pw = linalg::powers(a, p);
    let id = DMatrix::<f64>::identity(n, n);
    let outer = |x: &DMatrix<f64>| x * x.transpose();

    let s1: DMatrix<f64> = (k..p).fold(DMatrix::zeros(n, n), |acc, m| acc + &pw[m - 1]);
    let s2: DMatrix<f64> = (k..p).fold(DMatrix::zeros(n, n), |acc, m| {
        (0..m.saturating_sub(1)).fold(acc, |acc, i| acc + &pw[i])
    });
    let us: Vec<DMatrix<f64>> = (1..=p.saturating_sub(2) as i64)
        .map(|m| {
            let (lo, hi) = (k as i64 - 1 - m, p as i64 - 2 - m);
            (lo..=hi).filter(|&i| unit_step(i)).fold(DMatrix::zeros(n, n), |acc, i| acc + &pw[i as usize])
        })
        .collect();

    let mut c_under = &id * (v.sigma_o2 / l) + outer(&s1) * (v.sigma_i2 / (l * l)) + outer(&s2) * (v.sigma_a2 / (l * l));
    for u in &us {
        c_under += outer(u) * (v.sigma_p2 / (l * l));
    }
    let c_over = (&id * (v.sigma_p2 + v.sigma_o2) + outer(a) * v.sigma_o2) / l
        - (a + a.transpose()) * ((l - 1.0) * v.sigma_o2 / (l * l));
    let h_under = (n as f64 * (v.sigma_p2 + v.sigma_o2) + a.norm_squared() * v.sigma_o2) / l
        - 2.0 * (l - 1.0) * v.sigma_o2 * a.trace() / (l * l);
    let h_over = v.sigma_i2 / (l * l) * s1.norm_squared()
        + v.sigma_a2 / (l * l) * s2.norm_squared()
        + v.sigma_p2 / (l * l) * us.iter().map(|u| u.norm_squared()).sum::<f64>()
        + n as f64 * v.sigma_o2 / l;
    OffsetCovariance { c_under, c_over, h_under, h_over }
}
