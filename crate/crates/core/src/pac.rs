//! Iterative search for a horizon, data family and parameters under which the
//! error tolerance `phi` holds with probability at least `1 - delta`.
//!
//! Each iteration derives the horizon from the moment floor, selects pairs
//! over that horizon, and checks the conditions. When they fail, the solver
//! first looks for another `(rho3, eps)` that works with the current data, and
//! otherwise relaxes `phi` or `delta`.

use serde::{Deserialize, Serialize};

use crate::complexity::{self, ComplexityConfig, ConditionReport};
use crate::error::{Error, Result};
use crate::pipeline::{self, IndexFamily};
use crate::selector::{self, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacRequest {
    pub phi: f64,
    pub delta: f64,
    pub rho3: f64,
    pub eps: f64,
    #[serde(default = "one")]
    pub k: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelaxOrder {
    /// Alternate, starting with `phi`.
    PhiFirst,
    /// Alternate, starting with `delta`.
    DeltaFirst,
    PhiOnly,
    DeltaOnly,
}

/// The `(rho3, eps)` search grid, inclusive on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rho3_lo: f64,
    pub rho3_hi: f64,
    pub rho3_step: f64,
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub eps_step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { rho3_lo: 0.05, rho3_hi: 0.95, rho3_step: 0.05, eps_lo: 0.01, eps_hi: 0.49, eps_step: 0.02 }
    }
}

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || hi < lo {
        return Vec::new();
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|i| lo + i as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PacLimits {
    pub max_iter: usize,
    pub phi_factor: f64,
    pub delta_factor: f64,
    pub relax_order: RelaxOrder,
    /// Largest horizon the solver may ask for.
    pub max_horizon: u64,
    pub strategy: Strategy,
    pub pool_cap: usize,
    /// Candidate pools larger than this use the consecutive-pair chain without search.
    pub greedy_pool_max: usize,
    pub grid: GridSpec,
}

impl Default for PacLimits {
    fn default() -> Self {
        Self {
            max_iter: 50,
            phi_factor: 1.25,
            delta_factor: 1.15,
            relax_order: RelaxOrder::PhiFirst,
            max_horizon: 1_000,
            strategy: Strategy::Auto,
            pool_cap: selector::DEFAULT_POOL_CAP,
            greedy_pool_max: 66,
            grid: GridSpec::default(),
        }
    }
}

const DELTA_CAP: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacStatus {
    /// The request held as given.
    Certified,
    /// Held after changing `rho3` and `eps` only.
    Adjusted,
    /// Held after loosening `phi` or `delta`.
    Relaxed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PacAction {
    Certified,
    Adjusted { rho3: f64, eps: f64 },
    RelaxedPhi { phi: f64 },
    RelaxedDelta { delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub request: PacRequest,
    pub l_up: Option<u64>,
    pub p: Option<usize>,
    pub family_size: Option<usize>,
    pub conditions: Option<ConditionReport>,
    pub note: Option<String>,
    pub action: PacAction,
}

#[derive(Debug, Clone, Serialize)]
pub struct PacOutcome {
    pub status: PacStatus,
    pub request: PacRequest,
    pub final_request: PacRequest,
    pub final_l_up: Option<u64>,
    pub final_p: Option<usize>,
    pub final_family: Option<IndexFamily>,
    pub conditions: Option<ConditionReport>,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
}

/// Inputs for the stationary `eps` of the concentration margin.
#[derive(Debug, Clone, Copy)]
pub struct EpsOptInputs {
    pub n: usize,
    pub n_count: usize,
    pub p_bound: f64,
    pub cv_norm: f64,
    pub gamma: f64,
}

/// Grid points, `rho3` outer and `eps` inner, preceded by `(rho3, eps_opt(rho3))`
/// for every `rho3` whose optimum exists.
pub fn epsilon_rho_grid(grid: &GridSpec, opt: Option<EpsOptInputs>) -> Vec<(f64, f64)> {
    let rhos = steps(grid.rho3_lo, grid.rho3_hi, grid.rho3_step);
    let epss = steps(grid.eps_lo, grid.eps_hi, grid.eps_step);
    let mut out = Vec::new();
    if let Some(o) = opt {
        for &r in &rhos {
            let a = r * r / (o.n_count as f64 * o.p_bound * o.p_bound * o.cv_norm);
            if let Ok(e) = complexity::epsilon_opt(a, 0.5 * o.gamma * o.gamma, o.n) {
                if e > 0.0 && e < 0.5 {
                    out.push((r, e));
                }
            }
        }
    }
    for &r in &rhos {
        for &e in &epss {
            out.push((r, e));
        }
    }
    out
}

struct Evaluation {
    l_up: u64,
    p: usize,
    family: IndexFamily,
    cfg: ComplexityConfig,
    bounds: complexity::BoundSet,
    report: ConditionReport,
}

fn with_request(base: &ComplexityConfig, req: &PacRequest) -> ComplexityConfig {
    let mut cfg = base.clone();
    cfg.k = req.k;
    cfg.p = req.k + 1;
    cfg.phi = req.phi;
    cfg.delta = req.delta;
    cfg.rho3 = req.rho3;
    cfg.eps = req.eps;
    cfg
}

fn choose_family(cfg: &ComplexityConfig, limits: &PacLimits) -> Result<IndexFamily> {
    let pool = (cfg.p - cfg.k) * (cfg.p - cfg.k + 1) / 2;
    if pool > limits.greedy_pool_max && pool > limits.pool_cap {
        return pipeline::chain_family(cfg.k, cfg.p);
    }
    Ok(selector::select(cfg, limits.strategy, limits.pool_cap)?.family)
}

fn evaluate(base: &ComplexityConfig, req: &PacRequest, limits: &PacLimits) -> Result<std::result::Result<Evaluation, (Option<u64>, String)>> {
    let mut cfg = with_request(base, req);
    let (_, f2) = complexity::f_pair(&cfg.bounds, &cfg.variances(), req.k);
    let l_up = match complexity::l_up(&cfg, f2) {
        Ok(l) => l,
        Err(Error::Domain(m)) => return Ok(Err((None, m))),
        Err(e) => return Err(e),
    };
    if l_up > limits.max_horizon {
        return Ok(Err((Some(l_up), format!("horizon {l_up} exceeds the budget {}", limits.max_horizon))));
    }
    let p = (req.k + l_up as usize).saturating_sub(1).max(req.k + 1);
    cfg.p = p;
    let family = choose_family(&cfg, limits)?;
    let bounds = complexity::bound_set(&cfg, &family, None)?;
    let report = complexity::check_conditions(&cfg, &bounds.check_inputs(None))?;
    Ok(Ok(Evaluation { l_up, p, family, cfg, bounds, report }))
}

/// A `(rho3, eps)` that satisfies every condition with the data of `ev`.
fn adjust(ev: &Evaluation, limits: &PacLimits) -> Option<(f64, f64)> {
    let opt = EpsOptInputs {
        n: ev.cfg.n,
        n_count: ev.bounds.n_count,
        p_bound: ev.bounds.p_bound,
        cv_norm: ev.bounds.cv_norm,
        gamma: ev.cfg.gamma,
    };
    for (rho3, eps) in epsilon_rho_grid(&limits.grid, Some(opt)) {
        if rho3 == ev.cfg.rho3 && eps == ev.cfg.eps {
            continue;
        }
        let mut cfg = ev.cfg.clone();
        cfg.rho3 = rho3;
        cfg.eps = eps;
        if let Ok(rep) = complexity::check_conditions(&cfg, &ev.bounds.check_inputs(None)) {
            if rep.all_hold() {
                return Some((rho3, eps));
            }
        }
    }
    None
}

pub fn run_pac(request: &PacRequest, base: &ComplexityConfig, limits: &PacLimits) -> Result<PacOutcome> {
    with_request(base, request).validate_scalars()?;
    if limits.max_iter == 0 || !(limits.phi_factor > 1.0) || !(limits.delta_factor > 1.0) {
        return Err(Error::Config("limits need max_iter > 0 and relax factors above 1".into()));
    }
    let mut req = *request;
    let mut trace = Vec::new();
    let (mut adjusted, mut relaxed, mut relax_count) = (false, false, 0usize);
    let mut last: Option<Evaluation> = None;
    for iteration in 1..=limits.max_iter {
        let ev = evaluate(base, &req, limits)?;
        let (entry_base, ev) = match ev {
            Ok(ev) => {
                if ev.report.all_hold() {
                    trace.push(TraceEntry {
                        iteration,
                        request: req,
                        l_up: Some(ev.l_up),
                        p: Some(ev.p),
                        family_size: Some(ev.family.len()),
                        conditions: Some(ev.report),
                        note: None,
                        action: PacAction::Certified,
                    });
                    let status = match (adjusted, relaxed) {
                        (_, true) => PacStatus::Relaxed,
                        (true, false) => PacStatus::Adjusted,
                        _ => PacStatus::Certified,
                    };
                    return Ok(PacOutcome {
                        status,
                        request: *request,
                        final_request: req,
                        final_l_up: Some(ev.l_up),
                        final_p: Some(ev.p),
                        final_family: Some(ev.family),
                        conditions: Some(ev.report),
                        iterations: iteration,
                        trace,
                    });
                }
                if let Some((rho3, eps)) = adjust(&ev, limits) {
                    trace.push(TraceEntry {
                        iteration,
                        request: req,
                        l_up: Some(ev.l_up),
                        p: Some(ev.p),
                        family_size: Some(ev.family.len()),
                        conditions: Some(ev.report),
                        note: None,
                        action: PacAction::Adjusted { rho3, eps },
                    });
                    req.rho3 = rho3;
                    req.eps = eps;
                    adjusted = true;
                    last = Some(ev);
                    continue;
                }
                let entry = TraceEntry {
                    iteration,
                    request: req,
                    l_up: Some(ev.l_up),
                    p: Some(ev.p),
                    family_size: Some(ev.family.len()),
                    conditions: Some(ev.report),
                    note: Some("no (rho3, eps) satisfies the conditions with this data".into()),
                    action: PacAction::Certified,
                };
                (entry, Some(ev))
            }
            Err((l_up, note)) => (
                TraceEntry {
                    iteration,
                    request: req,
                    l_up,
                    p: None,
                    family_size: None,
                    conditions: None,
                    note: Some(note),
                    action: PacAction::Certified,
                },
                None,
            ),
        };
        let relax_phi = match limits.relax_order {
            RelaxOrder::PhiOnly => true,
            RelaxOrder::DeltaOnly => req.delta >= DELTA_CAP,
            RelaxOrder::PhiFirst => relax_count % 2 == 0 || req.delta >= DELTA_CAP,
            RelaxOrder::DeltaFirst => relax_count % 2 == 1 || req.delta >= DELTA_CAP,
        };
        let action = if relax_phi {
            req.phi *= limits.phi_factor;
            PacAction::RelaxedPhi { phi: req.phi }
        } else {
            req.delta = (req.delta * limits.delta_factor).min(DELTA_CAP);
            PacAction::RelaxedDelta { delta: req.delta }
        };
        relax_count += 1;
        relaxed = true;
        trace.push(TraceEntry { action, ..entry_base });
        if ev.is_some() {
            last = ev;
        }
    }
    Ok(PacOutcome {
        status: PacStatus::Failed,
        request: *request,
        final_request: req,
        final_l_up: last.as_ref().map(|e| e.l_up),
        final_p: last.as_ref().map(|e| e.p),
        final_family: last.as_ref().map(|e| e.family.clone()),
        conditions: last.as_ref().map(|e| e.report),
        iterations: limits.max_iter,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let g = epsilon_rho_grid(&GridSpec::default(), None);
        assert_eq!(g.len(), 475);
        assert!((g[0].0 - 0.05).abs() < 1e-15 && (g[0].1 - 0.01).abs() < 1e-15);
        let last = g[g.len() - 1];
        assert!((last.0 - 0.95).abs() < 1e-12 && (last.1 - 0.49).abs() < 1e-12);
    }

    #[test]
    fn optimum_points_come_first() {
        let opt = EpsOptInputs { n: 1, n_count: 1, p_bound: 1.0, cv_norm: 1.0, gamma: 0.0833 };
        let g = epsilon_rho_grid(&GridSpec::default(), Some(opt));
        assert!(g.len() > 475);
        let extra = g.len() - 475;
        assert_eq!(g[extra], (0.05, 0.01));
    }
}
