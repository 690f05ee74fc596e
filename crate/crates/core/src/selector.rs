//! Choosing which difference pairs to use so that the concentration condition
//! is as loose as possible.

use serde::{Deserialize, Serialize};

use crate::complexity::{self, ComplexityConfig};
use crate::error::{Error, Result};
use crate::pipeline::{self, IndexFamily, Tag};

pub const DEFAULT_POOL_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    Exhaustive,
    /// Exhaustive when the candidate pool fits under the cap, greedy otherwise.
    Auto,
}

/// Objective after each accepted step; the first entry is the starting family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionStep {
    pub added: Option<Tag>,
    pub objective: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Selection {
    pub family: IndexFamily,
    pub objective: f64,
    pub strategy: Strategy,
    pub evaluations: usize,
    pub steps: Vec<SelectionStep>,
}

/// Left side of the bound-based concentration condition for the family made of `tags`.
///
/// Uses `cfg.k`, `cfg.p`, `cfg.rho3`, `cfg.eps`, the variances and the spectral bounds.
pub fn objective(cfg: &ComplexityConfig, tags: &[Tag]) -> Result<f64> {
    let family = IndexFamily::from_tags(cfg.k, cfg.p, tags)?;
    objective_for(cfg, &family)
}

pub fn objective_for(cfg: &ComplexityConfig, family: &IndexFamily) -> Result<f64> {
    let v = cfg.variances();
    let f_sum: f64 = complexity::f_table(&cfg.bounds, &v, family).iter().map(|(_, f)| f).sum();
    if !(f_sum > 0.0) {
        return Err(Error::Domain("moment lower bounds sum to zero".into()));
    }
    let g = complexity::g_factor(&cfg.bounds, cfg.k, cfg.p);
    let p_bound = g * g / f_sum;
    let cv = complexity::cv_norm(family, cfg.n, &v);
    Ok(complexity::concentration_lhs(cfg, p_bound, complexity::n_count(family), cv))
}

pub fn select(cfg: &ComplexityConfig, strategy: Strategy, pool_cap: usize) -> Result<Selection> {
    cfg.validate_scalars()?;
    let pool = pipeline::all_tags(cfg.k, cfg.p);
    match strategy {
        Strategy::Exhaustive if pool.len() > pool_cap => Err(Error::Config(format!(
            "exhaustive search over {} candidates exceeds the cap of {pool_cap}",
            pool.len()
        ))),
        Strategy::Exhaustive => exhaustive(cfg, &pool),
        Strategy::Auto if pool.len() <= pool_cap => exhaustive(cfg, &pool),
        Strategy::Greedy | Strategy::Auto => greedy(cfg, &pool),
    }
}

fn exhaustive(cfg: &ComplexityConfig, pool: &[Tag]) -> Result<Selection> {
    let mut best: Option<(f64, u64)> = None;
    let mut evaluations = 0;
    for mask in 1u64..(1u64 << pool.len()) {
        let tags: Vec<Tag> = (0..pool.len()).filter(|i| mask >> i & 1 == 1).map(|i| pool[i]).collect();
        let val = objective(cfg, &tags)?;
        evaluations += 1;
        if best.map_or(true, |(b, _)| val > b) {
            best = Some((val, mask));
        }
    }
    let (val, mask) = best.ok_or_else(|| Error::Config("empty candidate pool".into()))?;
    let tags: Vec<Tag> = (0..pool.len()).filter(|i| mask >> i & 1 == 1).map(|i| pool[i]).collect();
    Ok(Selection {
        family: IndexFamily::from_tags(cfg.k, cfg.p, &tags)?,
        objective: val,
        strategy: Strategy::Exhaustive,
        evaluations,
        steps: vec![SelectionStep { added: None, objective: val }],
    })
}

/// Forward selection from the consecutive-pair chain; ties go to the smallest `(m, q)`.
fn greedy(cfg: &ComplexityConfig, pool: &[Tag]) -> Result<Selection> {
    let mut chosen: Vec<Tag> = (cfg.k..cfg.p).map(|m| (m, m + 1)).collect();
    let mut current = objective(cfg, &chosen)?;
    let mut evaluations = 1;
    let mut steps = vec![SelectionStep { added: None, objective: current }];
    loop {
        let mut best: Option<(f64, Tag)> = None;
        for &tag in pool.iter().filter(|t| !chosen.contains(t)) {
            let mut trial = chosen.clone();
            trial.push(tag);
            let val = objective(cfg, &trial)?;
            evaluations += 1;
            if val > current && best.map_or(true, |(b, _)| val > b) {
                best = Some((val, tag));
            }
        }
        match best {
            Some((val, tag)) => {
                chosen.push(tag);
                current = val;
                steps.push(SelectionStep { added: Some(tag), objective: val });
            }
            None => break,
        }
    }
    Ok(Selection {
        family: IndexFamily::from_tags(cfg.k, cfg.p, &chosen)?,
        objective: current,
        strategy: Strategy::Greedy,
        evaluations,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complexity::SpectralBounds;
    use crate::pipeline::FamilySpec;

    fn cfg(p: usize) -> ComplexityConfig {
        ComplexityConfig {
            n: 2,
            k: 1,
            p,
            family: FamilySpec::default(),
            rho1: 0.5,
            rho2: 0.5,
            rho3: 0.5,
            eps: 0.1,
            phi: 1.0,
            delta: 0.1,
            gamma: 0.0833,
            kappa: 3.0,
            c_universal: 9.5,
            mu: 0.5,
            sigma_p2: 0.3,
            sigma_o2: 0.1,
            sigma_i2: 0.3,
            sigma_a2: 0.0,
            bounds: SpectralBounds { sigma_min_a: 0.4, sigma_min_diff: 0.3, sigma_max_a: 0.9, sigma_max_diff: 1.2 },
        }
    }

    #[test]
    fn single_candidate_pool() {
        let sel = select(&cfg(2), Strategy::Exhaustive, 12).unwrap();
        assert_eq!(sel.family.tags(), vec![(1, 2)]);
        let g = select(&cfg(2), Strategy::Greedy, 12).unwrap();
        assert_eq!(g.family.tags(), vec![(1, 2)]);
        assert_eq!(sel.objective, g.objective);
    }

    #[test]
    fn exhaustive_dominates_greedy() {
        let c = cfg(4);
        let e = select(&c, Strategy::Exhaustive, 12).unwrap();
        let g = select(&c, Strategy::Greedy, 12).unwrap();
        assert!(e.objective >= g.objective);
        assert_eq!(e.evaluations, 63);
    }

    #[test]
    fn greedy_keeps_chain() {
        let g = select(&cfg(5), Strategy::Greedy, 12).unwrap();
        for m in 1..5 {
            assert!(g.family.contains((m, m + 1)));
        }
    }

    #[test]
    fn exhaustive_cap_enforced() {
        assert!(matches!(select(&cfg(6), Strategy::Exhaustive, 12), Err(Error::Config(_))));
        assert_eq!(select(&cfg(6), Strategy::Auto, 12).unwrap().strategy, Strategy::Greedy);
    }
}
