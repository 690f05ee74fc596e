//! Monte Carlo experiments over a sweep of observation counts, redundant
//! pairs or terminal times.
//!
//! Trial `t` always uses the generator stream `(master_seed, t)` and simulates
//! one trajectory long enough for every sweep value, so all sweep values and
//! estimators see the same realisations. Per-trial work runs in parallel and
//! is aggregated in trial order, so output does not depend on thread count.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::complexity::{self, ComplexityConfig};
use crate::error::{Error, Result};
use crate::estimators::{self, InferenceResult, Method};
use crate::mc;
use crate::pac::{self, PacLimits, PacOutcome, PacRequest};
use crate::pipeline::{self, FamilySpec, IndexFamily};
use crate::presets::{self, NoiseSpec, SystemSpec};
use crate::sim::{self, fmt_f64, LinearSystem, NoiseModel, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Number of observations `p - k + 1` of the family window.
    ObservationCount,
    /// Pairs added, in `(m, q)` order, to the pairs anchored at `k` on the window `k..=p`.
    RedundantCount,
    /// The window end `p`.
    TerminalTime,
}

impl SweepVariable {
    fn name(self) -> &'static str {
        match self {
            SweepVariable::ObservationCount => "observation_count",
            SweepVariable::RedundantCount => "redundant_count",
            SweepVariable::TerminalTime => "terminal_time",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<usize>,
}

/// Certification run followed by a horizon sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacDemo {
    pub request: PacRequest,
    pub config: ComplexityConfig,
    #[serde(default)]
    pub limits: PacLimits,
    /// Window ends to sweep; defaults to a band above the certified horizon.
    #[serde(default)]
    pub horizons: Option<Vec<usize>>,
}

fn default_k() -> usize {
    1
}

fn default_trials() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub system: SystemSpec,
    pub noise: NoiseSpec,
    pub estimators: Vec<Method>,
    #[serde(default)]
    pub family: FamilySpec,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Window end for redundant-count sweeps.
    #[serde(default)]
    pub p: Option<usize>,
    pub sweep: Sweep,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Error tolerance for the success fraction column.
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub pac: Option<PacDemo>,
}

/// A spec file: either a full spec or a preset name with optional overrides.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SpecFile {
    Preset {
        preset: String,
        #[serde(default)]
        trials: Option<usize>,
        #[serde(default)]
        master_seed: Option<u64>,
    },
    Full(Box<ExperimentSpec>),
}

impl SpecFile {
    pub fn resolve(self) -> Result<ExperimentSpec> {
        match self {
            SpecFile::Full(s) => Ok(*s),
            SpecFile::Preset { preset, trials, master_seed } => {
                let mut s = ExperimentSpec::preset(&preset)?;
                if let Some(t) = trials {
                    s.trials = t;
                }
                if let Some(m) = master_seed {
                    s.master_seed = m;
                }
                Ok(s)
            }
        }
    }
}

impl ExperimentSpec {
    /// `noise-compare`: estimator comparison over observation counts.
    /// `redundancy`: redundant pairs added on a fixed window.
    /// `certify` / `certify-alt`: certification followed by a horizon sweep.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "noise-compare" => Ok(Self {
                name: "noise-compare".into(),
                system: SystemSpec::Preset("noise-compare".into()),
                noise: NoiseSpec::Preset("noise-compare".into()),
                estimators: vec![Method::Proposed, Method::RawOls],
                family: FamilySpec::Preset("chain".into()),
                k: 1,
                p: None,
                sweep: Sweep { variable: SweepVariable::ObservationCount, values: (1..=6).map(|i| 10 * i).collect() },
                trials: 2000,
                master_seed: 1,
                tolerance: None,
                pac: None,
            }),
            "redundancy" => Ok(Self {
                name: "redundancy".into(),
                system: SystemSpec::Preset("redundancy".into()),
                noise: NoiseSpec::Preset("redundancy".into()),
                estimators: vec![Method::Proposed, Method::Naive],
                family: FamilySpec::Preset("anchored".into()),
                k: 1,
                p: Some(8),
                sweep: Sweep { variable: SweepVariable::RedundantCount, values: (0..=21).collect() },
                trials: 2000,
                master_seed: 2,
                tolerance: None,
                pac: None,
            }),
            "certify" | "certify-alt" => {
                let demo = certify_demo(name)?;
                Ok(Self {
                    name: name.into(),
                    system: SystemSpec::Preset(name.into()),
                    noise: NoiseSpec::Preset(name.into()),
                    estimators: vec![Method::Proposed],
                    family: FamilySpec::Preset("chain".into()),
                    k: 1,
                    p: None,
                    sweep: Sweep { variable: SweepVariable::TerminalTime, values: Vec::new() },
                    trials: 2000,
                    master_seed: 3,
                    tolerance: Some(demo.request.phi),
                    pac: Some(demo),
                })
            }
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimators listed".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.sweep.variable == SweepVariable::RedundantCount {
            let p = self.p.ok_or_else(|| Error::Config("redundant_count sweeps need `p`".into()))?;
            let max = pipeline::unanchored_tags(self.k, p).len();
            if let Some(&v) = self.sweep.values.iter().find(|&&v| v > max) {
                return Err(Error::Config(format!("redundant count {v} exceeds the {max} available pairs")));
            }
        }
        for &v in &self.sweep.values {
            self.family_for(v)?;
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return Err(Error::Config("tolerance must be positive".into()));
            }
        }
        Ok(())
    }

    /// The family used at sweep value `v`; its window end `p` implies `p + 1` observations.
    pub fn family_for(&self, v: usize) -> Result<IndexFamily> {
        let k = self.k;
        match self.sweep.variable {
            SweepVariable::ObservationCount => {
                if v < 2 {
                    return Err(Error::Config(format!("observation count {v} is below 2")));
                }
                self.family.resolve(k, k + v - 1)
            }
            SweepVariable::TerminalTime => self.family.resolve(k, v),
            SweepVariable::RedundantCount => {
                let p = self.p.ok_or_else(|| Error::Config("redundant_count sweeps need `p`".into()))?;
                let mut tags = pipeline::anchored_family(k, p)?.tags();
                let extra = pipeline::unanchored_tags(k, p);
                if v > extra.len() {
                    return Err(Error::Config(format!("redundant count {v} exceeds {}", extra.len())));
                }
                tags.extend_from_slice(&extra[..v]);
                IndexFamily::from_tags(k, p, &tags)
            }
        }
    }
}

/// Certification demo on the `0.44`-scaled reference system, assuming only
/// the singular-value bound `1.004` is known (the true norm is larger).
fn certify_demo(name: &str) -> Result<PacDemo> {
    let noise = presets::noise(name)?;
    let (k, p_hint) = (1, 145);
    let bounds = complexity::SpectralBounds::from_norm_bound(1.004, k, p_hint);
    let v = noise.variances();
    let mut config = ComplexityConfig {
        n: 4,
        k,
        p: p_hint,
        family: FamilySpec::Preset("chain".into()),
        rho1: 0.5,
        rho2: 0.5,
        rho3: 0.5,
        eps: 0.1,
        phi: 1.5,
        delta: 0.2811,
        gamma: complexity::DEFAULT_GAMMA,
        kappa: complexity::default_kappa(),
        c_universal: complexity::DEFAULT_C_UNIVERSAL,
        mu: noise.mu(),
        sigma_p2: 0.0,
        sigma_o2: 0.0,
        sigma_i2: 0.0,
        sigma_a2: 0.0,
        bounds,
    };
    config.set_variances(&v);
    let (_, f2) = complexity::f_pair(&bounds, &v, k);
    let rho3 = complexity::rho3_for_l_up(&config, f2, 139.5)?;
    config.rho3 = rho3;
    Ok(PacDemo {
        request: PacRequest { phi: 1.5, delta: 0.2811, rho3, eps: 0.1, k },
        config,
        limits: PacLimits::default(),
        horizons: Some(vec![141, 143, 145, 147, 150]),
    })
}

/// Aggregate for one sweep value and estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub variable: SweepVariable,
    pub value: usize,
    pub estimator: Method,
    pub trials: usize,
    pub feasible_fraction: f64,
    /// Mean spectral-norm error over feasible trials; NaN when none were feasible.
    pub mean_error: f64,
    pub stderr: f64,
    /// Fraction of all trials with error at most the tolerance.
    pub success_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub name: String,
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    pub fn row(&self, value: usize, estimator: Method) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.value == value && r.estimator == estimator)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "variable,value,estimator,trials,feasible_fraction,mean_error,stderr,success_fraction")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.variable.name(),
                r.value,
                r.estimator.name(),
                r.trials,
                fmt_f64(r.feasible_fraction),
                fmt_f64(r.mean_error),
                fmt_f64(r.stderr),
                r.success_fraction.map(fmt_f64).unwrap_or_default()
            )?;
        }
        Ok(())
    }

    /// Plot-ready series: one line per estimator and sweep value with a one-standard-error band.
    pub fn write_series_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "estimator,value,mean,lower,upper")?;
        let mut methods: Vec<Method> = Vec::new();
        for r in &self.rows {
            if !methods.contains(&r.estimator) {
                methods.push(r.estimator);
            }
        }
        for m in methods {
            for r in self.rows.iter().filter(|r| r.estimator == m) {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    m.name(),
                    r.value,
                    fmt_f64(r.mean_error),
                    fmt_f64(r.mean_error - r.stderr),
                    fmt_f64(r.mean_error + r.stderr)
                )?;
            }
        }
        Ok(())
    }
}

/// Resolved pieces of a spec.
pub struct Prepared {
    pub system: LinearSystem,
    pub noise: NoiseModel,
    pub families: Vec<IndexFamily>,
    pub length: usize,
}

pub fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    spec.validate()?;
    let system = spec.system.resolve()?;
    let noise = spec.noise.resolve()?;
    let families: Vec<IndexFamily> = spec.sweep.values.iter().map(|&v| spec.family_for(v)).collect::<Result<_>>()?;
    let length = families.iter().map(|f| f.p() + 1).max().unwrap_or(2);
    Ok(Prepared { system, noise, families, length })
}

/// Trajectory of trial `t`.
pub fn trial_trajectory(spec: &ExperimentSpec, prep: &Prepared, t: usize) -> Result<Trajectory> {
    let mut rng = mc::trial_rng(spec.master_seed, t as u64);
    sim::simulate_with_rng(&prep.system, &prep.noise, prep.length, &mut rng, false)
}

/// Every estimator at every sweep value for trial `t`, indexed `[value][estimator]`.
pub fn run_trial(spec: &ExperimentSpec, prep: &Prepared, t: usize) -> Result<Vec<Vec<InferenceResult>>> {
    let traj = trial_trajectory(spec, prep, t)?;
    prep.families
        .iter()
        .map(|fam| spec.estimators.iter().map(|&m| estimators::infer(m, &traj, fam)).collect())
        .collect()
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let prep = prepare(spec)?;
    let truth = prep.system.a_matrix.clone();
    let errors: Vec<Vec<Vec<Option<f64>>>> = mc::map_trials(spec.trials, |t| {
        Ok(run_trial(spec, &prep, t)?
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|r| r.a_matrix.map(|a| estimators::model_error(&a, &truth)))
                    .collect()
            })
            .collect())
    })?;
    let mut rows = Vec::new();
    for (vi, &value) in spec.sweep.values.iter().enumerate() {
        for (ei, &est) in spec.estimators.iter().enumerate() {
            let mut s = mc::Summary::new(1);
            let mut hits = 0usize;
            for trial in &errors {
                if let Some(e) = trial[vi][ei] {
                    s.push(&[e]);
                    if spec.tolerance.is_some_and(|tol| e <= tol) {
                        hits += 1;
                    }
                }
            }
            rows.push(ResultRow {
                variable: spec.sweep.variable,
                value,
                estimator: est,
                trials: spec.trials,
                feasible_fraction: s.count as f64 / spec.trials as f64,
                mean_error: if s.count > 0 { s.mean[0] } else { f64::NAN },
                stderr: s.stderr()[0],
                success_fraction: spec.tolerance.map(|_| hits as f64 / spec.trials as f64),
            });
        }
    }
    Ok(ExperimentResult { name: spec.name.clone(), rows })
}

/// Certify with the PAC solver, then sweep window ends around the certified horizon.
pub fn run_pac_demo(spec: &ExperimentSpec) -> Result<(PacOutcome, ExperimentResult)> {
    let demo = spec.pac.as_ref().ok_or_else(|| Error::Config("spec has no `pac` section".into()))?;
    let outcome = pac::run_pac(&demo.request, &demo.config, &demo.limits)?;
    let horizons = match &demo.horizons {
        Some(h) => h.clone(),
        None => {
            let l = outcome
                .final_l_up
                .or_else(|| outcome.trace.iter().rev().find_map(|t| t.l_up))
                .ok_or_else(|| Error::Domain("solver produced no horizon to sweep".into()))?;
            let p0 = demo.request.k + l as usize - 1;
            (0..=4).map(|i| p0 + 1 + 2 * i).collect()
        }
    };
    let mut sweep_spec = spec.clone();
    sweep_spec.sweep = Sweep { variable: SweepVariable::TerminalTime, values: horizons };
    sweep_spec.tolerance = Some(spec.tolerance.unwrap_or(outcome.final_request.phi));
    let result = run_experiment(&sweep_spec)?;
    Ok((outcome, result))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in ["noise-compare", "redundancy", "certify", "certify-alt"] {
            let s = ExperimentSpec::preset(name).unwrap();
            if s.sweep.values.is_empty() {
                continue;
            }
            s.validate().unwrap();
        }
        assert!(ExperimentSpec::preset("nope").is_err());
    }

    #[test]
    fn redundant_families_grow_to_full() {
        let s = ExperimentSpec::preset("redundancy").unwrap();
        assert_eq!(s.family_for(0).unwrap().len(), 7);
        assert_eq!(s.family_for(21).unwrap(), pipeline::full_family(1, 8).unwrap());
        assert_eq!(s.family_for(1).unwrap().tags()[7], (2, 3));
    }

    #[test]
    fn spec_file_forms() {
        let f: SpecFile = serde_json::from_str(r#"{"preset":"noise-compare","trials":5}"#).unwrap();
        assert_eq!(f.resolve().unwrap().trials, 5);
        let full = serde_json::to_string(&ExperimentSpec::preset("redundancy").unwrap()).unwrap();
        let f: SpecFile = serde_json::from_str(&full).unwrap();
        assert_eq!(f.resolve().unwrap(), ExperimentSpec::preset("redundancy").unwrap());
    }

    #[test]
    fn constant_noise_single_trial_has_zero_stderr() {
        let mut s = ExperimentSpec::preset("noise-compare").unwrap();
        s.noise = NoiseSpec::Explicit(NoiseModel {
            process: sim::DistributionSpec::constant(0.0),
            observation: sim::DistributionSpec::constant(0.0),
            initial: sim::DistributionSpec::uniform(-1.0, 1.0),
            offset: None,
        });
        s.trials = 1;
        s.sweep.values = vec![10];
        let r = run_experiment(&s).unwrap();
        assert!(r.rows.iter().all(|row| row.stderr == 0.0));
    }
}
