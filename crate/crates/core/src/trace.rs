//! Per-iteration records shared by every solver and their CSV form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::SpherePoint;

/// Final point and trace of a vector-valued solve.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub x: SpherePoint,
    pub trace: IterateTrace,
}

/// Observer evaluated on each iterate; never influences control flow.
pub type MetricHook<'a> = &'a (dyn Fn(&SpherePoint) -> f64 + Sync);

/// Branch of the closed-form single-sample step that produced `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepCase {
    PositiveSide,
    NegativeSide,
    ZeroSet,
}

impl StepCase {
    pub fn as_str(self) -> &'static str {
        match self {
            StepCase::PositiveSide => "positive_side",
            StepCase::NegativeSide => "negative_side",
            StepCase::ZeroSet => "zero_set",
        }
    }
}

/// Fields recorded only by the stochastic method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StochasticInfo {
    pub epoch: usize,
    pub t_k: f64,
    pub case: StepCase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub objective: f64,
    pub metric: Option<f64>,
    pub alpha: f64,
    pub d_norm: f64,
    pub alm_iters: usize,
    pub ssn_iters: usize,
    pub wall_seconds: f64,
    /// Number of rejected trial steps before acceptance.
    #[serde(default)]
    pub backtracks: usize,
    #[serde(default)]
    pub stochastic: Option<StochasticInfo>,
}

impl TraceRecord {
    pub fn initial(objective: f64, metric: Option<f64>) -> Self {
        Self {
            k: 0,
            objective,
            metric,
            alpha: 0.0,
            d_norm: 0.0,
            alm_iters: 0,
            ssn_iters: 0,
            wall_seconds: 0.0,
            backtracks: 0,
            stochastic: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    /// relative objective change below tolerance
    RelativeChange,
    /// step norm below its floor
    SmallStep,
    /// sufficient decrease no longer representable in floating point
    RoundingFloor,
    MaxIters,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::RelativeChange => "relative_change",
            Status::SmallStep => "small_step",
            Status::RoundingFloor => "rounding_floor",
            Status::MaxIters => "max_iters",
            Status::Failed => "failed",
        }
    }

    pub fn is_failure(self) -> bool {
        self == Status::Failed
    }
}

/// Record `0` holds the starting point; record `k ≥ 1` describes the step producing `x^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateTrace {
    pub records: Vec<TraceRecord>,
    pub status: Status,
    pub failure: Option<String>,
}

impl IterateTrace {
    pub fn new(initial: TraceRecord) -> Self {
        Self { records: vec![initial], status: Status::MaxIters, failure: None }
    }

    pub fn iters(&self) -> usize {
        self.records.last().map_or(0, |r| r.k)
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.objective)
    }

    pub fn final_metric(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.metric)
    }

    pub fn seconds(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.wall_seconds)
    }

    pub fn fail(&mut self, message: impl Into<String>) {
        self.status = Status::Failed;
        self.failure = Some(message.into());
    }

    pub fn total_backtracks(&self) -> usize {
        self.records.iter().map(|r| r.backtracks).sum()
    }

    pub fn has_stochastic_fields(&self) -> bool {
        self.records.iter().any(|r| r.stochastic.is_some())
    }
}

/// Controls whether wall-clock values are written; leaving them out keeps
/// repeated runs byte-identical.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvOptions {
    pub record_time: bool,
}

const BASE_COLUMNS: &str = "k,objective,metric,alpha,d_norm,alm_iters,ssn_iters,wall_seconds";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn push_row(out: &mut String, prefix: Option<usize>, r: &TraceRecord, stochastic: bool, opts: CsvOptions) {
    if let Some(c) = prefix {
        let _ = write!(out, "{c},");
    }
    let secs = if opts.record_time { r.wall_seconds.to_string() } else { String::new() };
    let _ = write!(
        out,
        "{},{},{},{},{},{},{},{}",
        r.k,
        r.objective,
        fmt_opt(r.metric),
        r.alpha,
        r.d_norm,
        r.alm_iters,
        r.ssn_iters,
        secs
    );
    if stochastic {
        match &r.stochastic {
            Some(s) => {
                let _ = write!(out, ",{},{},{}", s.epoch, s.t_k, s.case.as_str());
            }
            None => out.push_str(",,,"),
        }
    }
    out.push('\n');
}

impl IterateTrace {
    pub fn to_csv(&self, opts: CsvOptions) -> String {
        let stochastic = self.has_stochastic_fields();
        let mut out = String::from(BASE_COLUMNS);
        if stochastic {
            out.push_str(",epoch,t_k,case");
        }
        out.push('\n');
        for r in &self.records {
            push_row(&mut out, None, r, stochastic, opts);
        }
        out
    }
}

/// Several per-column traces in one table with a leading `column` index.
pub fn columns_to_csv(traces: &[IterateTrace], opts: CsvOptions) -> String {
    let mut out = format!("column,{BASE_COLUMNS}\n");
    for (c, tr) in traces.iter().enumerate() {
        for r in &tr.records {
            push_row(&mut out, Some(c), r, false, opts);
        }
    }
    out
}
