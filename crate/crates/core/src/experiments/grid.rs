use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::runner::{run_solver, SolverSpec};
use crate::datagen::{gen_odl, gen_rsr, odl_sample_count};
use crate::error::{Error, Result};
use crate::io::Instance;
use crate::trace::CsvOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum InstanceSpec {
    Rsr { n: usize, d: usize, p1: usize, p2: usize },
    /// `p` defaults to `⌈10 n^{1.5}⌉`
    Odl { n: usize, p: Option<usize>, gamma: f64 },
}

impl InstanceSpec {
    /// Fills in defaulted fields so that equal instances hash equally.
    pub fn resolved(&self) -> Self {
        match *self {
            InstanceSpec::Odl { n, p, gamma } => InstanceSpec::Odl { n, p: Some(p.unwrap_or_else(|| odl_sample_count(n))), gamma },
            ref rsr => rsr.clone(),
        }
    }

    pub fn generate(&self, seed: u64) -> Result<Instance> {
        Ok(match self.resolved() {
            InstanceSpec::Rsr { n, d, p1, p2 } => Instance::Rsr(gen_rsr(n, d, p1, p2, seed)?),
            InstanceSpec::Odl { n, p, gamma } => Instance::Odl(gen_odl(n, p.unwrap_or(0), gamma, seed)?),
        })
    }

    fn columns(&self) -> [String; 5] {
        match self.resolved() {
            InstanceSpec::Rsr { n, d, p1, p2 } => ["rsr".into(), n.to_string(), d.to_string(), p1.to_string(), p2.to_string()],
            InstanceSpec::Odl { n, p, gamma } => {
                ["odl".into(), n.to_string(), gamma.to_string(), String::new(), p.unwrap_or(0).to_string()]
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverEntry {
    #[serde(flatten)]
    pub spec: SolverSpec,
    /// Name written to the results table; defaults to the solver name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl SolverEntry {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.spec.name().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub instances: Vec<InstanceSpec>,
    pub solvers: Vec<SolverEntry>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub record_time: bool,
}

pub const RESULTS_HEADER: &str = "model,n,d|gamma,p1,p2|p,solver,seed,final_metric,iters,seconds,status,trace_path,key";

/// Content hash of one grid cell.
pub fn job_key(instance: &InstanceSpec, solver: &SolverEntry, seed: u64) -> String {
    #[derive(Serialize)]
    struct Cell<'a> {
        instance: InstanceSpec,
        solver: &'a SolverEntry,
        seed: u64,
    }
    let canonical = serde_json::to_vec(&Cell { instance: instance.resolved(), solver, seed }).expect("plain data serializes");
    hex::encode(&Sha256::digest(&canonical)[..8])
}

#[derive(Debug, Clone)]
pub struct ResultRow {
    pub key: String,
    pub line: String,
    pub trace_csv: Option<String>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Runs one cell; failures become rows with status `failed`.
pub fn run_job(instance: &InstanceSpec, solver: &SolverEntry, seed: u64, record_time: bool) -> ResultRow {
    let key = job_key(instance, solver, seed);
    let trace_path = format!("traces/{key}.csv");
    let outcome = instance.generate(seed).and_then(|inst| run_solver(&inst, &solver.spec, seed));
    let mut line = instance.columns().map(|c| csv_field(&c)).join(",");
    let _ = write!(line, ",{},{seed}", csv_field(&solver.label()));
    let trace_csv = match outcome {
        Ok(out) => {
            let secs = if record_time { out.seconds.to_string() } else { String::new() };
            let _ = write!(line, ",{},{},{secs},{},{trace_path}", out.final_metric, out.iters, out.status.as_str());
            Some(out.trace_csv(CsvOptions { record_time }))
        }
        Err(e) => {
            log::warn!("job {key} failed: {e}");
            line.push_str(",,,,failed,");
            None
        }
    };
    let _ = write!(line, ",{key}");
    ResultRow { key, line, trace_csv }
}

/// All cells in instance-major, then solver, then seed order.
pub fn jobs(spec: &GridSpec) -> Vec<(InstanceSpec, SolverEntry, u64)> {
    let mut out = Vec::new();
    for inst in &spec.instances {
        for solver in &spec.solvers {
            for &seed in &spec.seeds {
                out.push((inst.clone(), solver.clone(), seed));
            }
        }
    }
    out
}

/// In-memory run; the returned table is deterministic given the spec.
pub fn run_grid(spec: &GridSpec) -> (String, Vec<ResultRow>) {
    let rows: Vec<ResultRow> = jobs(spec)
        .par_iter()
        .map(|(i, s, seed)| run_job(i, s, *seed, spec.record_time))
        .collect();
    let mut table = format!("{RESULTS_HEADER}\n");
    for r in &rows {
        table.push_str(&r.line);
        table.push('\n');
    }
    (table, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridReport {
    pub ran: usize,
    pub skipped: usize,
    pub failed: usize,
}

fn completed_keys(results: &str) -> HashSet<String> {
    results
        .lines()
        .skip(1)
        .filter_map(|l| l.rsplit(',').next())
        .map(str::to_string)
        .collect()
}

/// Appends rows for cells not yet present in `out/results.csv`; writes each
/// trace to `out/traces/<key>.csv`.
pub fn run_grid_to_dir(spec: &GridSpec, out: &Path) -> Result<GridReport> {
    fs::create_dir_all(out.join("traces"))?;
    let results_path = out.join("results.csv");
    let existing = match fs::read_to_string(&results_path) {
        Ok(text) => {
            if !text.starts_with(RESULTS_HEADER) {
                return Err(Error::Parse(format!("{} has an unexpected header", results_path.display())));
            }
            text
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => format!("{RESULTS_HEADER}\n"),
        Err(e) => return Err(e.into()),
    };
    let done = completed_keys(&existing);
    let all = jobs(spec);
    let mut seen = HashSet::new();
    let pending: Vec<_> = all
        .iter()
        .filter(|(i, s, seed)| {
            let k = job_key(i, s, *seed);
            !done.contains(&k) && seen.insert(k)
        })
        .collect();
    let skipped = all.len() - pending.len();

    let (tx, rx) = std::sync::mpsc::channel::<(usize, ResultRow)>();
    let writer = {
        let out = out.to_path_buf();
        let mut table = existing;
        let n = pending.len();
        std::thread::spawn(move || -> Result<usize> {
            // rows arrive in any order; buffer and emit in job order
            let mut slots: Vec<Option<ResultRow>> = vec![None; n];
            for (idx, row) in rx {
                slots[idx] = Some(row);
            }
            let mut failed = 0;
            for row in slots.into_iter().flatten() {
                match &row.trace_csv {
                    Some(csv) => fs::write(out.join("traces").join(format!("{}.csv", row.key)), csv)?,
                    None => failed += 1,
                }
                table.push_str(&row.line);
                table.push('\n');
            }
            fs::write(out.join("results.csv"), table)?;
            Ok(failed)
        })
    };
    pending.par_iter().enumerate().for_each_with(tx, |tx, (idx, (i, s, seed))| {
        let _ = tx.send((idx, run_job(i, s, *seed, spec.record_time)));
    });
    let failed = writer.join().map_err(|_| Error::InvalidConfig("result writer panicked".into()))??;
    Ok(GridReport { ran: pending.len(), skipped, failed })
}
