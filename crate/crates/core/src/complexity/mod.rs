//! Sample-complexity machinery: moment formulas, the stacked noise vector,
//! spectral bounds, and the conditions that certify an error tolerance with
//! a given confidence.

mod bounds;
mod conditions;
mod eta;
mod moments;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use bounds::{f_pair, f_table, f_value, g_factor, offset_covariance, OffsetCovariance, SpectralBounds};
pub use conditions::{
    check_conditions, concentration_lhs, concentration_rhs, covering_log, epsilon_opt, l_up, l_up_raw, m_lo,
    moment_log, moment_rhs, phi_hat, rho3_for_l_up, CheckInputs, Condition, ConditionReport,
};
pub use eta::{
    build_cv, build_eta, build_pi, cv_norm, eta_layout, upsilon, CovAssembly, EtaEntry, EtaLayout, NoiseMap,
    Primitive, Segment,
};
pub use moments::{expected_diff_moment, gamma_and_m, n_count, MomentSet};

use crate::error::{Error, Result};
use crate::linalg;
use crate::pipeline::{FamilySpec, IndexFamily, Tag};
use crate::sim::NoiseVariances;

pub const DEFAULT_GAMMA: f64 = 0.0833;
pub const DEFAULT_C_UNIVERSAL: f64 = 9.5;

pub fn default_kappa() -> f64 {
    2.2 * std::f64::consts::SQRT_2
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

fn default_c() -> f64 {
    DEFAULT_C_UNIVERSAL
}

fn default_half() -> f64 {
    0.5
}

fn default_k() -> usize {
    1
}

/// Every constant the bound engine needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityConfig {
    pub n: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    pub p: usize,
    #[serde(default)]
    pub family: FamilySpec,
    #[serde(default = "default_half")]
    pub rho1: f64,
    #[serde(default = "default_half")]
    pub rho2: f64,
    pub rho3: f64,
    pub eps: f64,
    pub phi: f64,
    pub delta: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_c")]
    pub c_universal: f64,
    #[serde(default)]
    pub mu: f64,
    pub sigma_p2: f64,
    pub sigma_o2: f64,
    pub sigma_i2: f64,
    #[serde(default)]
    pub sigma_a2: f64,
    pub bounds: SpectralBounds,
}

impl ComplexityConfig {
    pub fn variances(&self) -> NoiseVariances {
        NoiseVariances {
            sigma_p2: self.sigma_p2,
            sigma_o2: self.sigma_o2,
            sigma_i2: self.sigma_i2,
            sigma_a2: self.sigma_a2,
        }
    }

    pub fn set_variances(&mut self, v: &NoiseVariances) {
        self.sigma_p2 = v.sigma_p2;
        self.sigma_o2 = v.sigma_o2;
        self.sigma_i2 = v.sigma_i2;
        self.sigma_a2 = v.sigma_a2;
    }

    /// Range checks on every scalar; the family is not resolved.
    pub fn validate_scalars(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(m));
        if self.n == 0 || self.k == 0 || self.p <= self.k {
            return Err(Error::Config(format!("need n >= 1 and 1 <= k < p, got n={}, k={}, p={}", self.n, self.k, self.p)));
        }
        if !(self.rho3 > 0.0 && self.rho3 < 1.0) {
            return bad(format!("rho3 must lie in (0, 1), got {}", self.rho3));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return bad(format!("eps must lie in (0, 1/2), got {}", self.eps));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        for (name, v) in [
            ("phi", self.phi),
            ("gamma", self.gamma),
            ("kappa", self.kappa),
            ("c_universal", self.c_universal),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("rho1", self.rho1),
            ("rho2", self.rho2),
            ("sigma_p2", self.sigma_p2),
            ("sigma_o2", self.sigma_o2),
            ("sigma_i2", self.sigma_i2),
            ("sigma_a2", self.sigma_a2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if !self.mu.is_finite() {
            return bad("mu must be finite".into());
        }
        self.bounds.validate()
    }

    pub fn family(&self) -> Result<IndexFamily> {
        self.family.resolve(self.k, self.p)
    }
}

/// Bound-side quantities for one configuration.
#[derive(Debug, Clone)]
pub struct BoundSet {
    pub f1: f64,
    pub f2: f64,
    pub f_table: Vec<(Tag, f64)>,
    pub f_sum: f64,
    pub g_factor: f64,
    /// `g^2 / sum f`, an upper bound on `||Pi^T Upsilon||^2`.
    pub p_bound: f64,
    pub n_count: usize,
    pub cv_norm: f64,
    /// Offset-estimate covariance bounds, present when `A` is supplied.
    pub offset: Option<OffsetCovariance>,
}

impl BoundSet {
    pub fn check_inputs(&self, exact: Option<(f64, f64)>) -> CheckInputs {
        CheckInputs {
            n_count: self.n_count,
            cv_norm: self.cv_norm,
            p_bound: self.p_bound,
            f_sum: self.f_sum,
            exact,
        }
    }
}

pub fn bound_set(cfg: &ComplexityConfig, family: &IndexFamily, a: Option<&DMatrix<f64>>) -> Result<BoundSet> {
    cfg.validate_scalars()?;
    let v = cfg.variances();
    let (f1, f2) = f_pair(&cfg.bounds, &v, cfg.k);
    let table = f_table(&cfg.bounds, &v, family);
    let f_sum: f64 = table.iter().map(|(_, f)| f).sum();
    let g = g_factor(&cfg.bounds, cfg.k, cfg.p);
    if !(f_sum > 0.0) {
        return Err(Error::Domain("moment lower bounds sum to zero".into()));
    }
    Ok(BoundSet {
        f1,
        f2,
        f_table: table,
        f_sum,
        g_factor: g,
        p_bound: g * g / f_sum,
        n_count: n_count(family),
        cv_norm: cv_norm(family, cfg.n, &v),
        offset: a.map(|a| offset_covariance(a, &v, cfg.k, cfg.p)),
    })
}

/// Everything the `bound` command reports.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub n_count: usize,
    pub cv_norm: f64,
    pub f1: f64,
    pub f2: f64,
    pub f_sum: f64,
    pub g_factor: f64,
    pub p_bound: f64,
    pub pi_upsilon_sq: Option<f64>,
    pub lambda_min_gamma: Option<f64>,
    pub upsilon_norm: Option<f64>,
    pub h_under: Option<f64>,
    pub h_over: Option<f64>,
    pub phi_hat: Option<f64>,
    pub l_up: Option<u64>,
    pub m_lo: Option<f64>,
    pub eps_opt: Option<f64>,
    pub conditions: ConditionReport,
}

/// Evaluate bounds and conditions; with `A` also the exact-map quantities.
pub fn evaluate(cfg: &ComplexityConfig, a: Option<&DMatrix<f64>>) -> Result<BoundReport> {
    let family = cfg.family()?;
    if let Some(a) = a {
        if a.nrows() != cfg.n || a.ncols() != cfg.n {
            return Err(Error::Dimension(format!("A is {}x{}, config has n={}", a.nrows(), a.ncols(), cfg.n)));
        }
    }
    let bs = bound_set(cfg, &family, a)?;
    let exact = match a {
        Some(a) => {
            let ms = gamma_and_m(a, &cfg.variances(), &family)?;
            let pi_sq = build_pi(a, &family).upsilon_norm_sq(&ms.m_inv_sqrt);
            Some((ms, pi_sq))
        }
        None => None,
    };
    let conditions = check_conditions(cfg, &bs.check_inputs(exact.as_ref().map(|(ms, s)| (*s, ms.lambda_min_gamma))))?;
    let l_up_v = l_up(cfg, bs.f2).ok();
    let m_lo_v = l_up_v.and_then(|l| m_lo(cfg, bs.f2, l).ok());
    let a_coef = cfg.rho3 * cfg.rho3 / (bs.n_count as f64 * bs.p_bound * bs.p_bound * bs.cv_norm);
    let eps_opt = epsilon_opt(a_coef, 0.5 * cfg.gamma * cfg.gamma, cfg.n).ok();
    let phi_hat_v = match (a, &bs.offset) {
        (Some(a), Some(off)) => {
            let ones = DVector::from_element(cfg.n, cfg.mu);
            let resid = (&ones - a * &ones).norm();
            Some(phi_hat(cfg, off.h_over, off.h_under, resid)?)
        }
        _ => None,
    };
    Ok(BoundReport {
        n_count: bs.n_count,
        cv_norm: bs.cv_norm,
        f1: bs.f1,
        f2: bs.f2,
        f_sum: bs.f_sum,
        g_factor: bs.g_factor,
        p_bound: bs.p_bound,
        pi_upsilon_sq: exact.as_ref().map(|(_, s)| *s),
        lambda_min_gamma: exact.as_ref().map(|(ms, _)| ms.lambda_min_gamma),
        upsilon_norm: exact.as_ref().map(|(ms, _)| ms.upsilon_norm),
        h_under: bs.offset.as_ref().map(|o| o.h_under),
        h_over: bs.offset.as_ref().map(|o| o.h_over),
        phi_hat: phi_hat_v,
        l_up: l_up_v,
        m_lo: m_lo_v,
        eps_opt,
        conditions,
    })
}

/// Smallest eigenvalue of a symmetric matrix, re-exported for callers checking floors.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    linalg::lambda_min(m)
}
