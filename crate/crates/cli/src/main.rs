use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sysid_core::complexity::{self, ComplexityConfig};
use sysid_core::estimators::{self, FeasibilityReport, InferenceResult, Method};
use sysid_core::experiment::{self, SpecFile};
use sysid_core::pac::{self, PacLimits, PacRequest};
use sysid_core::pipeline::{FamilySpec, IndexFamily};
use sysid_core::presets::{NoiseSpec, SystemSpec};
use sysid_core::sim::{self, Trajectory};
use sysid_core::{Error, Result};

#[derive(Parser)]
#[command(name = "sysid", version, about = "Model inference of linear systems from one noisy trajectory")]
struct Cli {
    /// Overrides the seed of `simulate` and the master seed of `experiment`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo runs (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory and write `trajectory.csv` into the output directory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the system matrix and offset from a trajectory CSV.
    Infer {
        #[arg(long)]
        traj: PathBuf,
        /// `full`, `chain`, `anchored`, or a path to a family JSON file.
        #[arg(long, default_value = "chain")]
        family: String,
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Window end; defaults to the last time the trajectory allows.
        #[arg(long)]
        p: Option<usize>,
        /// Estimators to run: proposed, naive, raw_ols (repeatable; default all).
        #[arg(long)]
        method: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate bounds and conditions for a complexity configuration.
    Bound {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the certification loop for a request.
    Pac {
        #[arg(long)]
        request: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment and write its tables into the output directory.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the trial count of the spec.
        #[arg(long)]
        trials: Option<usize>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    system: SystemSpec,
    noise: NoiseSpec,
    #[serde(alias = "p")]
    length: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "yes")]
    record_noise: bool,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
struct BoundInput {
    #[serde(flatten)]
    config: ComplexityConfig,
    #[serde(rename = "A", default)]
    a_matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PacInput {
    request: PacRequest,
    config: ComplexityConfig,
    #[serde(default)]
    limits: PacLimits,
}

#[derive(Serialize)]
struct InferOutput<'a> {
    k: usize,
    p: usize,
    family: &'a IndexFamily,
    feasibility: FeasibilityReport,
    results: Vec<InferenceResult>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { line: e.line() as u64, message: format!("{}: {e}", path.display()) })
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn simulate(cli: &Cli, config: &Path, out: &Path) -> Result<()> {
    let cfg: SimulateConfig = read_json(config)?;
    let system = cfg.system.resolve()?;
    let noise = cfg.noise.resolve()?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    let traj = sim::simulate(&system, &noise, cfg.length, seed, cfg.record_noise)?;
    fs::create_dir_all(out)?;
    traj.save_csv(&out.join("trajectory.csv"))
}

fn resolve_family(arg: &str, k: usize, p: usize) -> Result<IndexFamily> {
    let path = Path::new(arg);
    if path.is_file() {
        let spec: FamilySpec = read_json(path)?;
        let fam = spec.resolve(k, p)?;
        if fam.k() != k || fam.p() != p {
            return Err(Error::Config(format!(
                "family file covers [{}, {}], command asks for [{k}, {p}]",
                fam.k(),
                fam.p()
            )));
        }
        return Ok(fam);
    }
    FamilySpec::Preset(arg.to_string()).resolve(k, p)
}

fn infer(traj: &Path, family: &str, k: usize, p: Option<usize>, methods: &[String], out: Option<&Path>) -> Result<()> {
    let traj = Trajectory::load_csv(traj)?;
    let p = match p {
        Some(p) => p,
        None => traj
            .len()
            .checked_sub(1)
            .filter(|&p| p > k)
            .ok_or(Error::Horizon { required: k + 2, available: traj.len() })?,
    };
    let fam = resolve_family(family, k, p)?;
    let methods: Vec<Method> = if methods.is_empty() {
        vec![Method::Proposed, Method::Naive, Method::RawOls]
    } else {
        methods
            .iter()
            .map(|m| {
                serde_json::from_value(serde_json::Value::String(m.clone()))
                    .map_err(|_| Error::Config(format!("unknown method `{m}`")))
            })
            .collect::<Result<_>>()?
    };
    let results = methods.iter().map(|&m| estimators::infer(m, &traj, &fam)).collect::<Result<Vec<_>>>()?;
    let feasibility = estimators::feasibility_report(&traj, &fam)?;
    emit_json(&InferOutput { k, p, family: &fam, feasibility, results }, out)
}

fn bound(config: &Path, out: Option<&Path>) -> Result<()> {
    let input: BoundInput = read_json(config)?;
    let a = input.a_matrix.as_deref().map(sim::matrix_from_rows).transpose()?;
    let report = complexity::evaluate(&input.config, a.as_ref())?;
    emit_json(&report, out)
}

fn pac(request: &Path, out: Option<&Path>) -> Result<()> {
    let input: PacInput = read_json(request)?;
    let outcome = pac::run_pac(&input.request, &input.config, &input.limits)?;
    emit_json(&outcome, out)
}

fn run_experiment(cli: &Cli, spec: &Path, out: &Path, trials: Option<usize>) -> Result<()> {
    let file: SpecFile = read_json(spec)?;
    let mut spec = file.resolve()?;
    if let Some(seed) = cli.seed {
        spec.master_seed = seed;
    }
    if let Some(t) = trials {
        spec.trials = t;
    }
    spec.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
    let result = if spec.pac.is_some() {
        let (outcome, result) = experiment::run_pac_demo(&spec)?;
        emit_json(&outcome, Some(&out.join("pac.json")))?;
        result
    } else {
        experiment::run_experiment(&spec)?
    };
    let mut w = create(&out.join("results.csv"))?;
    result.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&out.join("series.csv"))?;
    result.write_series_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Simulate { config, out } => simulate(cli, config, out),
        Command::Infer { traj, family, k, p, method, out } => infer(traj, family, *k, *p, method, out.as_deref()),
        Command::Bound { config, out } => bound(config, out.as_deref()),
        Command::Pac { request, out } => pac(request, out.as_deref()),
        Command::Experiment { spec, out, trials } => run_experiment(cli, spec, out, *trials),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
