//! Simulation of `x(k+1) = A x(k) + a + f(k)`, `r(k) = x(k) + w(k)`, time starting at 1.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc;

const OVERFLOW_LIMIT: f64 = 1e150;

/// Scalar distribution applied independently to every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Uniform { lo: f64, hi: f64 },
    Gaussian { mean: f64, std: f64 },
    Constant { value: f64 },
}

impl DistributionSpec {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::Uniform { lo, hi }
    }

    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Self::Gaussian { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
            Self::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid distribution {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => 0.5 * (lo + hi),
            Self::Gaussian { mean, .. } => mean,
            Self::Constant { value } => value,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Self::Gaussian { std, .. } => std * std,
            Self::Constant { .. } => 0.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Uniform { lo, hi } if lo < hi => rng.gen_range(lo..hi),
            Self::Uniform { lo, .. } => lo,
            Self::Gaussian { mean, std } => {
                Normal::new(mean, std).expect("validated std").sample(rng)
            }
            Self::Constant { value } => value,
        }
    }

    pub fn sample_vec<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.sample(rng))
    }
}

/// Per-coordinate variances and observation mean that the bound engine consumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseVariances {
    pub sigma_p2: f64,
    pub sigma_o2: f64,
    pub sigma_i2: f64,
    #[serde(default)]
    pub sigma_a2: f64,
}

/// Noise sources of the system.
///
/// `offset` is an optional random perturbation drawn once per trajectory and
/// added to the system's fixed offset; `None` keeps the offset fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub process: DistributionSpec,
    pub observation: DistributionSpec,
    pub initial: DistributionSpec,
    #[serde(default)]
    pub offset: Option<DistributionSpec>,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        self.observation.validate()?;
        self.initial.validate()?;
        if let Some(o) = &self.offset {
            o.validate()?;
        }
        Ok(())
    }

    pub fn variances(&self) -> NoiseVariances {
        NoiseVariances {
            sigma_p2: self.process.variance(),
            sigma_o2: self.observation.variance(),
            sigma_i2: self.initial.variance(),
            sigma_a2: self.offset.map_or(0.0, |o| o.variance()),
        }
    }

    /// Mean of the observation noise.
    pub fn mu(&self) -> f64 {
        self.observation.mean()
    }

    /// The bound engine assumes zero-mean process, initial and offset noise.
    pub fn check_zero_mean(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.process.mean() != 0.0 {
            bad.push("process");
        }
        if self.initial.mean() != 0.0 {
            bad.push("initial");
        }
        if self.offset.is_some_and(|o| o.mean() != 0.0) {
            bad.push("offset");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("noise must be zero-mean: {}", bad.join(", "))))
        }
    }
}

/// The pair `(A, a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub a_matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl LinearSystem {
    pub fn new(a_matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if a_matrix.nrows() != a_matrix.ncols() || a_matrix.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a_matrix.nrows(),
                a_matrix.ncols()
            )));
        }
        if offset.len() != a_matrix.nrows() {
            return Err(Error::Dimension(format!(
                "offset has length {}, expected {}",
                offset.len(),
                a_matrix.nrows()
            )));
        }
        if a_matrix.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Config("system entries must be finite".into()));
        }
        Ok(Self { a_matrix, offset })
    }

    pub fn homogeneous(a_matrix: DMatrix<f64>) -> Result<Self> {
        let n = a_matrix.nrows();
        Self::new(a_matrix, DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.a_matrix.nrows()
    }
}

#[derive(Serialize, Deserialize)]
struct SystemRepr {
    #[serde(rename = "A")]
    a_matrix: Vec<Vec<f64>>,
    #[serde(default, rename = "a")]
    offset: Option<Vec<f64>>,
}

impl Serialize for LinearSystem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SystemRepr {
            a_matrix: matrix_rows(&self.a_matrix),
            offset: Some(self.offset.iter().copied().collect()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LinearSystem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = SystemRepr::deserialize(d)?;
        let a = matrix_from_rows(&repr.a_matrix).map_err(serde::de::Error::custom)?;
        let offset = match repr.offset {
            Some(v) => DVector::from_vec(v),
            None => DVector::zeros(a.nrows()),
        };
        LinearSystem::new(a, offset).map_err(serde::de::Error::custom)
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// Latent quantities behind a trajectory: states, process and observation noise, offset.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRecord {
    pub states: Vec<DVector<f64>>,
    pub process: Vec<DVector<f64>>,
    pub observation: Vec<DVector<f64>>,
    /// The offset actually applied; unknown when loaded from a file without it.
    pub offset: Option<DVector<f64>>,
}

/// Observations `r(1), ..., r(len)` with an optional latent record.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    observations: Vec<DVector<f64>>,
    record: Option<LatentRecord>,
}

impl Trajectory {
    pub fn from_observations(observations: Vec<DVector<f64>>) -> Result<Self> {
        Self::with_record(observations, None)
    }

    pub fn with_record(observations: Vec<DVector<f64>>, record: Option<LatentRecord>) -> Result<Self> {
        let n = observations.first().map_or(0, |v| v.len());
        if n == 0 {
            return Err(Error::Dimension("trajectory needs at least one non-empty observation".into()));
        }
        let consistent = |vs: &[DVector<f64>]| vs.len() == observations.len() && vs.iter().all(|v| v.len() == n);
        if observations.iter().any(|v| v.len() != n) {
            return Err(Error::Dimension("observations have mixed dimensions".into()));
        }
        if let Some(r) = &record {
            if !(consistent(&r.states) && consistent(&r.process) && consistent(&r.observation))
                || r.offset.as_ref().is_some_and(|a| a.len() != n)
            {
                return Err(Error::Dimension("latent record does not match observations".into()));
            }
        }
        Ok(Self { observations, record })
    }

    pub fn dim(&self) -> usize {
        self.observations[0].len()
    }

    /// Number of observations.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Observation `r(t)`, 1-based.
    pub fn r(&self, t: usize) -> &DVector<f64> {
        &self.observations[t - 1]
    }

    pub fn try_r(&self, t: usize) -> Result<&DVector<f64>> {
        if t == 0 || t > self.len() {
            return Err(Error::Horizon { required: t, available: self.len() });
        }
        Ok(self.r(t))
    }

    pub fn observations(&self) -> &[DVector<f64>] {
        &self.observations
    }

    pub fn record(&self) -> Option<&LatentRecord> {
        self.record.as_ref()
    }

    pub fn require_record(&self) -> Result<&LatentRecord> {
        self.record
            .as_ref()
            .ok_or_else(|| Error::DiagnosticUnavailable("trajectory carries no noise record".into()))
    }

    /// Write as CSV: `k,r_1..r_n` and, when recorded, `x_*,f_*,w_*` and `a_*` columns.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.dim();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["k".to_string()];
        let groups: &[&str] = match &self.record {
            Some(r) if r.offset.is_some() => &["r", "x", "f", "w", "a"],
            Some(_) => &["r", "x", "f", "w"],
            None => &["r"],
        };
        for g in groups {
            header.extend((1..=n).map(|i| format!("{g}_{i}")));
        }
        w.write_record(&header).map_err(csv_io)?;
        for t in 1..=self.len() {
            let mut row = vec![t.to_string()];
            let mut push = |v: &DVector<f64>| row.extend(v.iter().map(|x| fmt_f64(*x)));
            push(self.r(t));
            if let Some(r) = &self.record {
                push(&r.states[t - 1]);
                push(&r.process[t - 1]);
                push(&r.observation[t - 1]);
                if let Some(a) = &r.offset {
                    push(a);
                }
            }
            w.write_record(&row).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        let layout = CsvLayout::from_header(&header)?;
        let n = layout.n;
        let mut obs = Vec::new();
        let mut latent: [Vec<DVector<f64>>; 4] = Default::default();
        for (i, rec) in rdr.records().enumerate() {
            let line = 2 + i as u64;
            let rec = rec.map_err(|e| Error::Parse { line, message: e.to_string() })?;
            if rec.len() != header.len() {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {} cells, found {}", header.len(), rec.len()),
                });
            }
            let cells: Vec<f64> = rec
                .iter()
                .enumerate()
                .map(|(j, c)| {
                    c.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("non-numeric cell `{c}` in column `{}`", header[j]),
                    })
                })
                .collect::<Result<_>>()?;
            if cells[0] != (i + 1) as f64 {
                return Err(Error::Parse { line, message: format!("expected k = {}", i + 1) });
            }
            let block = |g: usize| DVector::from_column_slice(&cells[1 + g * n..1 + (g + 1) * n]);
            obs.push(block(0));
            for g in 1..layout.groups {
                latent[g - 1].push(block(g));
            }
        }
        let record = if layout.groups >= 4 {
            let [states, process, observation, offs] = latent;
            Some(LatentRecord {
                states,
                process,
                observation,
                offset: offs.into_iter().next(),
            })
        } else {
            None
        };
        Self::with_record(obs, record)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

struct CsvLayout {
    n: usize,
    groups: usize,
}

impl CsvLayout {
    fn from_header(header: &[String]) -> Result<Self> {
        let schema = |m: &str| Error::Schema(m.to_string());
        if header.first().map(String::as_str) != Some("k") {
            return Err(schema("first column must be `k`"));
        }
        let n = header.iter().filter(|h| h.starts_with("r_")).count();
        if n == 0 {
            return Err(schema("no `r_*` columns"));
        }
        let groups = (header.len() - 1) / n;
        if (header.len() - 1) % n != 0 || !matches!(groups, 1 | 4 | 5) {
            return Err(schema("columns must be r_*, optionally followed by x_*, f_*, w_* and a_*"));
        }
        for (g, name) in ["r", "x", "f", "w", "a"].iter().take(groups).enumerate() {
            for i in 0..n {
                let expected = format!("{name}_{}", i + 1);
                if header[1 + g * n + i] != expected {
                    return Err(schema(&format!(
                        "column {} is `{}`, expected `{expected}`",
                        2 + g * n + i,
                        header[1 + g * n + i]
                    )));
                }
            }
        }
        Ok(Self { n, groups })
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// 17 significant digits, enough to round-trip every `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Simulate `len` observations with a generator seeded from `seed`.
pub fn simulate(
    system: &LinearSystem,
    noise: &NoiseModel,
    len: usize,
    seed: u64,
    record_noise: bool,
) -> Result<Trajectory> {
    simulate_with_rng(system, noise, len, &mut mc::trial_rng(seed, 0), record_noise)
}

/// Simulate with a caller-supplied generator.
///
/// Draw order: `x(1)`, the random offset (if any), then `w(t)` and `f(t)` for each step.
pub fn simulate_with_rng<R: Rng + ?Sized>(
    system: &LinearSystem,
    noise: &NoiseModel,
    len: usize,
    rng: &mut R,
    record_noise: bool,
) -> Result<Trajectory> {
    if len == 0 {
        return Err(Error::Config("trajectory length must be positive".into()));
    }
    noise.validate()?;
    let n = system.dim();
    let mut x = noise.initial.sample_vec(n, rng);
    let mut offset = system.offset.clone();
    if let Some(o) = &noise.offset {
        offset += o.sample_vec(n, rng);
    }
    let mut obs = Vec::with_capacity(len);
    let (mut xs, mut fs, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for t in 1..=len {
        if x.iter().any(|v| !v.is_finite() || v.abs() > OVERFLOW_LIMIT) {
            return Err(Error::Overflow { step: t });
        }
        let w = noise.observation.sample_vec(n, rng);
        let f = noise.process.sample_vec(n, rng);
        obs.push(&x + &w);
        let next = &system.a_matrix * &x + &offset + &f;
        if record_noise {
            xs.push(x);
            fs.push(f);
            ws.push(w);
        }
        x = next;
    }
    let record = record_noise.then(|| LatentRecord {
        states: xs,
        process: fs,
        observation: ws,
        offset: Some(offset),
    });
    Trajectory::with_record(obs, record)
}

/// Empirical second moment of `r(k) - r(m)` with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub mean: DMatrix<f64>,
    pub stderr: DMatrix<f64>,
    pub trials: usize,
}

/// Monte Carlo estimate of `E[(r(k) - r(m)) (r(k) - r(m))^T]`, every source re-sampled per trial.
pub fn empirical_diff_moment(
    system: &LinearSystem,
    noise: &NoiseModel,
    k: usize,
    m: usize,
    trials: usize,
    master_seed: u64,
) -> Result<MomentEstimate> {
    if k == 0 || m <= k {
        return Err(Error::Config(format!("need 1 <= k < m, got k={k}, m={m}")));
    }
    let n = system.dim();
    let summary = mc::summarize(trials, n * n, |t| {
        let mut rng = mc::trial_rng(master_seed, t as u64);
        let traj = simulate_with_rng(system, noise, m, &mut rng, false)?;
        let d = traj.r(k) - traj.r(m);
        Ok((&d * d.transpose()).as_slice().to_vec())
    })?;
    Ok(MomentEstimate {
        mean: DMatrix::from_column_slice(n, n, &summary.mean),
        stderr: DMatrix::from_column_slice(n, n, &summary.stderr()),
        trials,
    })
}
