use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use manppa::datagen::{gen_odl, gen_rsr, odl_sample_count};
use manppa::experiments::{
    curve_points_csv, odl_fit_curve, rsr_tolerance_curve, run_grid_to_dir, run_solver, GridSpec, OdlCurveSpec,
    RsrCurveSpec, SolverSpec, SOLVER_NAMES,
};
use manppa::io::{load_instance, save_instance, write_matrix, Instance};
use manppa::trace::CsvOptions;

#[derive(Parser, Debug)]
#[command(name = "manppa", version, about = "Proximal point solvers for l1 minimization on the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic instance directory
    Gen {
        #[command(subcommand)]
        model: GenModel,
    },
    /// Solve an instance directory
    Solve(SolveArgs),
    /// Run a solver × instance × seed grid
    Experiment {
        grid: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        record_time: bool,
    },
    /// Fitting curve for subspace recovery or dictionary learning
    Curve {
        kind: CurveKind,
        /// curve spec JSON; the desk preset is used when absent
        spec: Option<PathBuf>,
        /// full-size grids and trial counts
        #[arg(long)]
        full: bool,
        #[arg(long, default_value = "curve")]
        out: PathBuf,
    },
    /// Re-execute a run from its run.json
    Rerun {
        run: PathBuf,
        /// output directory; defaults to the directory holding run.json
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum GenModel {
    Rsr {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        p1: usize,
        #[arg(long)]
        p2: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    Odl {
        #[arg(long)]
        n: usize,
        /// defaults to ⌈10 n^1.5⌉
        #[arg(long)]
        p: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CurveKind {
    Rsr,
    Odl,
}

#[derive(clap::Args, Debug)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(SOLVER_NAMES))]
    solver: String,
    /// number of columns for matrix solvers
    #[arg(long)]
    q: Option<usize>,
    /// JSON object with solver settings
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    record_time: bool,
}

/// Fully resolved invocation; enough to reproduce every output.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
enum RunRecord {
    Solve { instance: PathBuf, solver: SolverSpec, seed: u64, record_time: bool },
    Experiment { grid: GridSpec },
    Curve { kind: CurveKind, spec: Value },
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    solver: &'a str,
    instance: String,
    final_objective: f64,
    final_metric: f64,
    iters: usize,
    seconds: Option<f64>,
    status: &'a str,
}

/// Raised when a solver ran but did not produce a usable result.
#[derive(Debug)]
struct SolverFailure(String);

impl std::fmt::Display for SolverFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "solver failure: {}", self.0)
    }
}

impl std::error::Error for SolverFailure {}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Overlays `patch` onto `base` key by key.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Defaults, then the config file, then flags.
fn resolve_solver(args: &SolveArgs) -> Result<SolverSpec> {
    let q = args.q.unwrap_or(1);
    let mut spec = serde_json::to_value(SolverSpec::from_name(&args.solver, q).expect("validated by clap"))?;
    if let Some(path) = &args.config {
        let file: Value = read_json(path)?;
        let Value::Object(_) = file else { bail!("{} must hold a JSON object", path.display()) };
        merge(&mut spec["config"], file);
    }
    if let Some(q) = args.q {
        if spec.get("q").is_some() {
            spec["q"] = q.into();
        }
    }
    let resolved: SolverSpec = serde_json::from_value(spec).context("invalid solver configuration")?;
    if resolved.is_matrix() && args.q.is_none() {
        bail!("--q is required for {}", args.solver);
    }
    Ok(resolved)
}

fn execute_solve(instance: &Path, solver: &SolverSpec, seed: u64, record_time: bool, out: &Path) -> Result<()> {
    let inst = load_instance(instance).with_context(|| format!("loading instance {}", instance.display()))?;
    fs::create_dir_all(out)?;
    let record = RunRecord::Solve { instance: instance.to_path_buf(), solver: solver.clone(), seed, record_time };
    write_json(&out.join("run.json"), &record)?;
    let result = run_solver(&inst, solver, seed).map_err(|e| SolverFailure(e.to_string()))?;
    fs::write(out.join("trace.csv"), result.trace_csv(CsvOptions { record_time }))?;
    write_matrix(&out.join("x.csv"), result.solution.as_matrix().view())?;
    let summary = Summary {
        solver: solver.name(),
        instance: instance.display().to_string(),
        final_objective: result.final_objective,
        final_metric: result.final_metric,
        iters: result.iters,
        seconds: record_time.then_some(result.seconds),
        status: result.status.as_str(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    if result.status.is_failure() {
        return Err(SolverFailure(result.failure.unwrap_or_else(|| "unknown".into())).into());
    }
    Ok(())
}

fn execute_experiment(grid: &GridSpec, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    write_json(&out.join("run.json"), &RunRecord::Experiment { grid: grid.clone() })?;
    let report = run_grid_to_dir(grid, out)?;
    log::info!("grid: {} ran, {} skipped, {} failed", report.ran, report.skipped, report.failed);
    println!("{}", serde_json::json!({ "ran": report.ran, "skipped": report.skipped, "failed": report.failed }));
    Ok(())
}

fn execute_curve(kind: CurveKind, spec: &Value, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    write_json(&out.join("run.json"), &RunRecord::Curve { kind, spec: spec.clone() })?;
    let (curve, outer, inner) = match kind {
        CurveKind::Rsr => (rsr_tolerance_curve(&serde_json::from_value::<RsrCurveSpec>(spec.clone())?)?, "p2", "p1"),
        CurveKind::Odl => (odl_fit_curve(&serde_json::from_value::<OdlCurveSpec>(spec.clone())?)?, "n", "p"),
    };
    fs::write(out.join("curve.csv"), curve_points_csv(&curve, outer, inner))?;
    let fits = serde_json::json!({
        "fit": curve.fit,
        "pairs": curve.pairs,
        "omitted": curve.omitted,
    });
    write_json(&out.join("fits.json"), &fits)?;
    if !curve.omitted.is_empty() {
        log::warn!("no qualifying point for {outer} in {:?}", curve.omitted);
    }
    println!("{}", serde_json::to_string(&fits)?);
    Ok(())
}

fn rerun(record: RunRecord, out: &Path) -> Result<()> {
    match record {
        RunRecord::Solve { instance, solver, seed, record_time } => execute_solve(&instance, &solver, seed, record_time, out),
        RunRecord::Experiment { grid } => execute_experiment(&grid, out),
        RunRecord::Curve { kind, spec } => execute_curve(kind, &spec, out),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { model } => {
            let (inst, out) = match model {
                GenModel::Rsr { n, d, p1, p2, seed, out } => (Instance::Rsr(gen_rsr(n, d, p1, p2, seed)?), out),
                GenModel::Odl { n, p, gamma, seed, out } => {
                    (Instance::Odl(gen_odl(n, p.unwrap_or_else(|| odl_sample_count(n)), gamma, seed)?), out)
                }
            };
            save_instance(&out, &inst)?;
            println!("{}", out.display());
            Ok(())
        }
        Command::Solve(args) => {
            let solver = resolve_solver(&args)?;
            let seed = args.seed.unwrap_or(0);
            log::info!("resolved solver: {}", serde_json::to_string(&solver)?);
            let out = args
                .out
                .clone()
                .unwrap_or_else(|| args.instance.join("runs").join(format!("{}-seed{seed}", args.solver)));
            execute_solve(&args.instance, &solver, seed, args.record_time, &out)
        }
        Command::Experiment { grid, out, record_time } => {
            let mut spec: GridSpec = read_json(&grid)?;
            spec.record_time |= record_time;
            execute_experiment(&spec, &out)
        }
        Command::Curve { kind, spec, full, out } => {
            let mut value = match (kind, full) {
                (CurveKind::Rsr, false) => serde_json::to_value(RsrCurveSpec::desk())?,
                (CurveKind::Rsr, true) => serde_json::to_value(RsrCurveSpec::full())?,
                (CurveKind::Odl, false) => serde_json::to_value(OdlCurveSpec::desk())?,
                (CurveKind::Odl, true) => serde_json::to_value(OdlCurveSpec::full())?,
            };
            if let Some(path) = spec {
                merge(&mut value, read_json(&path)?);
            }
            execute_curve(kind, &value, &out)
        }
        Command::Rerun { run, out } => {
            let record: RunRecord = read_json(&run)?;
            let out = out.unwrap_or_else(|| run.parent().map(Path::to_path_buf).unwrap_or_default());
            rerun(record, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<SolverFailure>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
