//! Sufficient conditions for the high-probability error bound, and the
//! horizon and tolerance they imply.

use serde::Serialize;

use super::ComplexityConfig;
use crate::error::{Error, Result};

/// One inequality `lhs >= rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Condition {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

impl Condition {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        let margin = lhs - rhs;
        Self { lhs, rhs, margin, holds: margin >= 0.0 }
    }
}

/// The four checks: concentration with the exact noise map (needs `A`), the
/// moment floor, concentration with the bound-based map, and horizon consistency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionReport {
    pub concentration_exact: Option<Condition>,
    pub moment_floor: Condition,
    pub concentration_bound: Condition,
    pub horizon: Condition,
}

impl ConditionReport {
    /// Every evaluated condition holds.
    pub fn all_hold(&self) -> bool {
        self.concentration_exact.map_or(true, |c| c.holds)
            && self.moment_floor.holds
            && self.concentration_bound.holds
            && self.horizon.holds
    }
}

/// Structural inputs to the checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckInputs {
    pub n_count: usize,
    pub cv_norm: f64,
    /// Bound-based stand-in for `||Pi^T Upsilon||^2`.
    pub p_bound: f64,
    /// Lower bound on `lambda_min(Gamma)` used when `A` is unknown.
    pub f_sum: f64,
    /// `||Pi^T Upsilon||^2` and `lambda_min(Gamma)` when `A` is known.
    pub exact: Option<(f64, f64)>,
}

/// `ln(4 (2/eps + 1)^n / delta)`.
pub fn covering_log(cfg: &ComplexityConfig) -> f64 {
    4f64.ln() + cfg.n as f64 * (2.0 / cfg.eps + 1.0).ln() - cfg.delta.ln()
}

/// `ln(((1 - rho3)/2)^{n/2} * 2 * 5^n / delta)`.
pub fn moment_log(cfg: &ComplexityConfig) -> f64 {
    let n = cfg.n as f64;
    0.5 * n * ((1.0 - cfg.rho3) / 2.0).ln() + 2f64.ln() + n * 5f64.ln() - cfg.delta.ln()
}

/// `min{(1-2eps)^2 rho3^2 / (N x^2 ||C||), (1-2eps) rho3 / x}` for a map-norm `x`.
pub fn concentration_lhs(cfg: &ComplexityConfig, x: f64, n_count: usize, cv_norm: f64) -> f64 {
    let s = 1.0 - 2.0 * cfg.eps;
    let first = if cv_norm > 0.0 {
        s * s * cfg.rho3 * cfg.rho3 / (n_count as f64 * x * x * cv_norm)
    } else {
        f64::INFINITY
    };
    first.min(s * cfg.rho3 / x)
}

pub fn concentration_rhs(cfg: &ComplexityConfig) -> f64 {
    0.5 * cfg.gamma * cfg.gamma * covering_log(cfg)
}

/// `32 c kappa^2 / (phi^2 (1 - rho3)) * moment_log`.
pub fn moment_rhs(cfg: &ComplexityConfig) -> f64 {
    32.0 * cfg.c_universal * cfg.kappa * cfg.kappa / (cfg.phi * cfg.phi * (1.0 - cfg.rho3)) * moment_log(cfg)
}

/// Unrounded horizon bound `moment_rhs / f2 + 1`.
pub fn l_up_raw(cfg: &ComplexityConfig, f2: f64) -> Result<f64> {
    cfg.validate_scalars()?;
    if !(f2 > 0.0) {
        return Err(Error::Domain(format!("moment floor f2 must be positive, got {f2}")));
    }
    let lg = moment_log(cfg);
    if !(lg > 0.0) {
        return Err(Error::Domain(format!(
            "logarithmic factor is {lg:.6}; rho3={} and delta={} leave no valid horizon",
            cfg.rho3, cfg.delta
        )));
    }
    Ok(moment_rhs(cfg) / f2 + 1.0)
}

/// Smallest number of observations for which the moment floor is guaranteed.
pub fn l_up(cfg: &ComplexityConfig, f2: f64) -> Result<u64> {
    let raw = l_up_raw(cfg, f2)?;
    if raw > 9.0e15 {
        return Err(Error::Domain(format!("horizon bound {raw:e} is not representable")));
    }
    Ok(raw.ceil() as u64)
}

/// Tolerance certified with `l` observations: `sqrt(moment_rhs * phi^2 / (f2 l))`.
pub fn m_lo(cfg: &ComplexityConfig, f2: f64, l: u64) -> Result<f64> {
    l_up_raw(cfg, f2)?;
    if l == 0 {
        return Err(Error::Domain("horizon must be positive".into()));
    }
    Ok((moment_rhs(cfg) * cfg.phi * cfg.phi / (f2 * l as f64)).sqrt())
}

/// A `rho3` for which the unrounded horizon bound equals `target_raw`.
///
/// With `x = 1 - rho3` the bound is proportional to `((n/2) ln(x/2) + C) / x`,
/// which rises from zero at `x0 = 2 exp(-2C/n)` to a single maximum; the root
/// is searched on that rising branch. Other fields of `cfg` are used as given.
pub fn rho3_for_l_up(cfg: &ComplexityConfig, f2: f64, target_raw: f64) -> Result<f64> {
    let n = cfg.n as f64;
    let c = 2f64.ln() + n * 5f64.ln() - cfg.delta.ln();
    let scale = 32.0 * cfg.c_universal * cfg.kappa * cfg.kappa / (cfg.phi * cfg.phi * f2);
    let g = |x: f64| (0.5 * n * (x / 2.0).ln() + c) / x;
    let x0 = 2.0 * (-2.0 * c / n).exp();
    let x_peak = (2.0 * (1.0 - 2.0 * c / n).exp()).min(1.0 - 1e-12);
    let want = (target_raw - 1.0) / scale;
    if !(f2 > 0.0) || x0 >= x_peak || !(want > 0.0) || want > g(x_peak) {
        return Err(Error::NoRoot(format!("no rho3 in (0, 1) gives a horizon bound of {target_raw}")));
    }
    let (mut lo, mut hi) = (x0, x_peak);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < want {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(1.0 - 0.5 * (lo + hi))
}

pub fn check_conditions(cfg: &ComplexityConfig, inputs: &CheckInputs) -> Result<ConditionReport> {
    cfg.validate_scalars()?;
    let rhs = concentration_rhs(cfg);
    let concentration_exact = inputs
        .exact
        .map(|(pi_sq, _)| Condition::new(concentration_lhs(cfg, pi_sq, inputs.n_count, inputs.cv_norm), rhs));
    let concentration_bound =
        Condition::new(concentration_lhs(cfg, inputs.p_bound, inputs.n_count, inputs.cv_norm), rhs);
    let floor = inputs.exact.map_or(inputs.f_sum, |(_, lmin)| lmin);
    let moment_floor = Condition::new(floor, moment_rhs(cfg));
    let (_, f2) = super::bounds::f_pair(&cfg.bounds, &cfg.variances(), cfg.k);
    let l = (cfg.p - cfg.k + 1) as f64;
    let horizon = match l_up_raw(cfg, f2) {
        Ok(raw) => Condition::new(l, raw),
        Err(_) => Condition::new(l, f64::INFINITY),
    };
    Ok(ConditionReport { concentration_exact, moment_floor, concentration_bound, horizon })
}

/// Smallest root in `[0, 1/2)` of `(1 - 2e)(2 + e) e = n b / (2 a)`.
///
/// The left side rises from 0 to its maximum near `e = 0.2638` and falls
/// afterwards, so a root exists only when the target does not exceed it.
pub fn epsilon_opt(a: f64, b: f64, n: usize) -> Result<f64> {
    if !(a > 0.0) || !(b >= 0.0) || n == 0 {
        return Err(Error::Domain(format!("need a > 0, b >= 0, n > 0; got a={a}, b={b}, n={n}")));
    }
    let target = n as f64 * b / (2.0 * a);
    let cubic = |e: f64| (1.0 - 2.0 * e) * (2.0 + e) * e;
    let peak = (-1.0 + (1.0f64 + 4.0 / 3.0).sqrt()) / 2.0;
    if target > cubic(peak) {
        return Err(Error::NoRoot(format!(
            "target {target:.6} exceeds the attainable maximum {:.6}",
            cubic(peak)
        )));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, peak);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cubic(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Error bound on the offset estimate given the bound `phi` on the matrix error.
pub fn phi_hat(cfg: &ComplexityConfig, h_over: f64, h_under: f64, mean_residual_norm: f64) -> Result<f64> {
    let a = cfg.rho1 + h_over;
    let b = cfg.rho2 + h_under;
    if a < 0.0 || b < 0.0 {
        return Err(Error::Domain(format!("negative radicand in offset bound ({a}, {b})")));
    }
    Ok((a.sqrt() + (cfg.n as f64).sqrt() * cfg.mu.abs()) * cfg.phi + b.sqrt() + mean_residual_norm)
}
