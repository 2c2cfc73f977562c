//! Uniform entry point over every solver and instance model.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::baselines::{irls_solve, psgm_mbls_solve, psgm_solve, rsgm_solve, IrlsConfig, MblsConfig, SubgradientConfig};
use crate::datagen::spectral_init;
use crate::error::Result;
use crate::geometry::{project_sphere, SpherePoint};
use crate::io::Instance;
use crate::manppa::{manppa_solve, ManppaConfig};
use crate::metrics::{angle_to_dictionary, match_dictionary, principal_angle, subspace_distance};
use crate::rng::SeededRng;
use crate::stiefel::{matrix_objective, sequential_manppa, InitPolicy};
use crate::stmanppa::{stmanppa_solve, StmanppaConfig};
use crate::trace::{columns_to_csv, CsvOptions, IterateTrace, Status};

const INIT_SALT: u64 = 0x5EED_1417_0000_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "kebab-case")]
pub enum SolverSpec {
    Manppa {
        #[serde(default)]
        config: ManppaConfig,
    },
    Stmanppa {
        #[serde(default)]
        config: StmanppaConfig,
    },
    Psgm {
        #[serde(default)]
        config: SubgradientConfig,
    },
    Rsgm {
        #[serde(default)]
        config: SubgradientConfig,
    },
    PsgmMbls {
        #[serde(default)]
        config: MblsConfig,
    },
    Irls {
        q: usize,
        #[serde(default)]
        config: IrlsConfig,
    },
    SeqManppa {
        q: usize,
        #[serde(default)]
        config: ManppaConfig,
        #[serde(default)]
        init: InitPolicy,
    },
}

pub const SOLVER_NAMES: [&str; 7] = ["manppa", "stmanppa", "psgm", "rsgm", "psgm-mbls", "irls", "seq-manppa"];

impl SolverSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SolverSpec::Manppa { .. } => "manppa",
            SolverSpec::Stmanppa { .. } => "stmanppa",
            SolverSpec::Psgm { .. } => "psgm",
            SolverSpec::Rsgm { .. } => "rsgm",
            SolverSpec::PsgmMbls { .. } => "psgm-mbls",
            SolverSpec::Irls { .. } => "irls",
            SolverSpec::SeqManppa { .. } => "seq-manppa",
        }
    }

    /// Default configuration for a solver name; matrix solvers take `q`.
    pub fn from_name(name: &str, q: usize) -> Option<Self> {
        Some(match name {
            "manppa" => SolverSpec::Manppa { config: ManppaConfig::default() },
            "stmanppa" => SolverSpec::Stmanppa { config: StmanppaConfig::default() },
            "psgm" => SolverSpec::Psgm { config: SubgradientConfig::default() },
            "rsgm" => SolverSpec::Rsgm { config: SubgradientConfig::default() },
            "psgm-mbls" => SolverSpec::PsgmMbls { config: MblsConfig::default() },
            "irls" => SolverSpec::Irls { q, config: IrlsConfig::default() },
            "seq-manppa" => SolverSpec::SeqManppa { q, config: ManppaConfig::default(), init: InitPolicy::default() },
            _ => return None,
        })
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self, SolverSpec::Irls { .. } | SolverSpec::SeqManppa { .. })
    }
}

#[derive(Debug, Clone)]
pub enum Solution {
    Vector(SpherePoint),
    Matrix(Array2<f64>),
}

impl Solution {
    /// As an `n×q` matrix.
    pub fn as_matrix(&self) -> Array2<f64> {
        match self {
            Solution::Vector(x) => x.coords().to_owned().insert_axis(ndarray::Axis(1)),
            Solution::Matrix(m) => m.clone(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub solution: Solution,
    pub traces: Vec<IterateTrace>,
    pub final_objective: f64,
    pub final_metric: f64,
    pub iters: usize,
    pub seconds: f64,
    pub status: Status,
    pub failure: Option<String>,
}

impl RunOutput {
    pub fn trace_csv(&self, opts: CsvOptions) -> String {
        match self.traces.as_slice() {
            [single] if matches!(self.solution, Solution::Vector(_)) => single.to_csv(opts),
            many => columns_to_csv(many, opts),
        }
    }
}

/// Gaussian start drawn from a stream derived from `seed`.
pub fn random_start(n: usize, seed: u64) -> Result<SpherePoint> {
    let mut rng = SeededRng::new(seed ^ INIT_SALT);
    let g = Array1::from_iter((0..n).map(|_| rng.normal()));
    project_sphere(g.view())
}

/// Spectral start for subspace recovery, Gaussian start for dictionary learning.
pub fn default_start(inst: &Instance, seed: u64) -> Result<SpherePoint> {
    match inst {
        Instance::Rsr(i) => spectral_init(&i.y),
        Instance::Odl(i) => random_start(i.y.n(), seed),
    }
}

fn vector_metric(inst: &Instance, x: &SpherePoint) -> f64 {
    match inst {
        Instance::Rsr(i) => principal_angle(x, &i.s),
        Instance::Odl(i) => angle_to_dictionary(x, i.xhat.view()).0,
    }
}

fn matrix_metric(inst: &Instance, x: &Array2<f64>) -> f64 {
    match inst {
        Instance::Rsr(i) => subspace_distance(x.view(), &i.s),
        Instance::Odl(i) => match_dictionary(x.view(), i.xhat.view()).max_angle,
    }
}

/// Solves `inst` from the default start; `seed` feeds the start and any
/// solver-internal sampling.
pub fn run_solver(inst: &Instance, solver: &SolverSpec, seed: u64) -> Result<RunOutput> {
    let y = inst.y();
    let hook = |x: &SpherePoint| vector_metric(inst, x);
    let vector = |out: crate::trace::SolveOutput| {
        let metric = vector_metric(inst, &out.x);
        RunOutput {
            final_objective: out.trace.final_objective(),
            final_metric: metric,
            iters: out.trace.iters(),
            seconds: out.trace.seconds(),
            status: out.trace.status,
            failure: out.trace.failure.clone(),
            traces: vec![out.trace],
            solution: Solution::Vector(out.x),
        }
    };
    Ok(match solver {
        SolverSpec::Manppa { config } => vector(manppa_solve(y, &default_start(inst, seed)?, config, Some(&hook))?),
        SolverSpec::Stmanppa { config } => {
            let cfg = StmanppaConfig { seed, ..config.clone() };
            vector(stmanppa_solve(y, &default_start(inst, seed)?, &cfg, Some(&hook))?)
        }
        SolverSpec::Psgm { config } => vector(psgm_solve(y, &default_start(inst, seed)?, config, Some(&hook))?),
        SolverSpec::Rsgm { config } => vector(rsgm_solve(y, &default_start(inst, seed)?, config, Some(&hook))?),
        SolverSpec::PsgmMbls { config } => vector(psgm_mbls_solve(y, &default_start(inst, seed)?, config, Some(&hook))?),
        SolverSpec::Irls { q, config } => {
            let out = irls_solve(y, *q, config, None)?;
            let x = out.x.into_inner();
            RunOutput {
                final_objective: out.trace.final_objective(),
                final_metric: matrix_metric(inst, &x),
                iters: out.trace.iters(),
                seconds: out.trace.seconds(),
                status: out.trace.status,
                failure: out.trace.failure.clone(),
                traces: vec![out.trace],
                solution: Solution::Matrix(x),
            }
        }
        SolverSpec::SeqManppa { q, config, init } => {
            let init = match init {
                InitPolicy::Random { seed: s } => InitPolicy::Random { seed: s ^ seed },
                InitPolicy::Spectral => InitPolicy::Spectral,
            };
            let out = sequential_manppa(y, *q, config, init, Some(&hook))?;
            let x = out.x.into_inner();
            let failed = out.traces.iter().find(|t| t.status.is_failure());
            let status = failed.or(out.traces.last()).map_or(Status::MaxIters, |t| t.status);
            RunOutput {
                final_objective: matrix_objective(y, x.view()),
                final_metric: matrix_metric(inst, &x),
                iters: out.traces.iter().map(IterateTrace::iters).sum(),
                seconds: out.traces.iter().map(IterateTrace::seconds).sum(),
                status,
                failure: failed.and_then(|t| t.failure.clone()),
                traces: out.traces,
                solution: Solution::Matrix(x),
            }
        }
    })
}
