//! Manifold proximal point outer loop: subproblem solve, backtracking on the
//! sphere and normalization retraction.

use std::time::Instant;

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{l1_objective, project_sphere, DataMatrix, SpherePoint, TangentVector};
use crate::linalg::norm2;
use crate::subsolver::{alm_solve, AlmConfig, SubproblemSpec, WarmStart};
use crate::trace::{IterateTrace, MetricHook, SolveOutput, Status, TraceRecord};

const MAX_RESOLVES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManppaConfig {
    pub t: f64,
    pub beta: f64,
    pub max_iters: usize,
    pub rel_obj_tol: f64,
    /// stop once `‖d^k‖₂` falls to this value
    pub d_tol: f64,
    pub max_backtracks: usize,
    pub subsolver: AlmConfig,
}

impl Default for ManppaConfig {
    fn default() -> Self {
        Self {
            t: 0.1,
            beta: 0.5,
            max_iters: 100,
            rel_obj_tol: 1e-9,
            d_tol: 1e-14,
            max_backtracks: 60,
            subsolver: AlmConfig::default(),
        }
    }
}

impl ManppaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(Error::InvalidConfig(format!("t must be positive, got {}", self.t)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidConfig(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.rel_obj_tol >= 0.0) || !(self.d_tol >= 0.0) {
            return Err(Error::InvalidConfig("tolerances must be nonnegative".into()));
        }
        self.subsolver.validate()
    }
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub alpha: f64,
    pub j: usize,
    pub f_new: f64,
    pub x_new: SpherePoint,
}

fn retract(x: ArrayView1<f64>, d: ArrayView1<f64>, alpha: f64, orth: Option<ArrayView2<f64>>) -> Result<SpherePoint> {
    let mut v = x.to_owned();
    v.scaled_add(alpha, &d);
    if let Some(q) = orth {
        let coef = q.t().dot(&v);
        v = &v - &q.dot(&coef);
    }
    project_sphere(v.view())
}

fn backtrack(
    y: &DataMatrix,
    x: &SpherePoint,
    fx: f64,
    d: ArrayView1<f64>,
    t: f64,
    beta: f64,
    max_j: usize,
    orth: Option<ArrayView2<f64>>,
) -> Result<LineSearchOutcome> {
    let dd = d.dot(&d);
    if dd == 0.0 {
        return Ok(LineSearchOutcome { alpha: 1.0, j: 0, f_new: fx, x_new: x.clone() });
    }
    let mut alpha = 1.0;
    for j in 0..=max_j {
        let cand = retract(x.coords(), d, alpha, orth)?;
        let f_new = l1_objective(y, cand.coords());
        if f_new <= fx - alpha * dd / (2.0 * t) {
            return Ok(LineSearchOutcome { alpha, j, f_new, x_new: cand });
        }
        alpha *= beta;
    }
    Err(Error::LineSearchStall { steps: max_j })
}

/// First `α = β^j` with `f(proj(x + αd)) ≤ f(x) − α‖d‖²/(2t)`; gives up after 60 halvings.
pub fn line_search(y: &DataMatrix, x: &SpherePoint, d: &TangentVector, t: f64, beta: f64) -> Result<LineSearchOutcome> {
    if !(t > 0.0) || !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidConfig(format!("line search needs t > 0 and beta in (0,1), got t={t}, beta={beta}")));
    }
    let fx = l1_objective(y, x.coords());
    backtrack(y, x, fx, d.dir(), t, beta, 60, None)
}

/// Runs the method from `x0`; failures inside the loop end the run with
/// [`Status::Failed`] and keep the trace collected so far.
pub fn manppa_solve(
    y: &DataMatrix,
    x0: &SpherePoint,
    config: &ManppaConfig,
    metric: Option<MetricHook<'_>>,
) -> Result<SolveOutput> {
    run(y, x0, None, config, metric)
}

/// Same iteration restricted to the orthogonal complement of the orthonormal
/// columns of `q`; `x0` must already be orthogonal to them.
pub fn manppa_solve_constrained(
    y: &DataMatrix,
    x0: &SpherePoint,
    q: ArrayView2<f64>,
    config: &ManppaConfig,
    metric: Option<MetricHook<'_>>,
) -> Result<SolveOutput> {
    run(y, x0, Some(q), config, metric)
}

fn run(
    y: &DataMatrix,
    x0: &SpherePoint,
    orth: Option<ArrayView2<f64>>,
    config: &ManppaConfig,
    metric: Option<MetricHook<'_>>,
) -> Result<SolveOutput> {
    config.validate()?;
    if x0.dim() != y.n() {
        return Err(Error::DimensionMismatch(format!("x0 has length {}, data has {} rows", x0.dim(), y.n())));
    }
    let orth = orth.filter(|q| q.ncols() > 0);
    let start = Instant::now();
    let mut x = match orth {
        Some(q) => retract(x0.coords(), Array1::zeros(y.n()).view(), 0.0, Some(q))?,
        None => x0.clone(),
    };
    let mut fx = l1_objective(y, x.coords());
    let mut trace = IterateTrace::new(TraceRecord::initial(fx, metric.map(|h| h(&x))));
    let mut warm: Option<WarmStart> = None;
    let t = config.t;
    let mut prev_d_norm = None;

    for k in 0..config.max_iters {
        let step = SubproblemSpec::new(y, &x, t, orth).and_then(|spec| {
            let mut eps = config.subsolver.eps_for_step(k, prev_d_norm);
            let mut sol = alm_solve(&spec, &config.subsolver, warm.as_ref(), eps)?;
            // a step much shorter than the previous one needs a tighter solve
            for _ in 0..MAX_RESOLVES {
                let want = config.subsolver.eps_for_step(k, Some(norm2(sol.d.dir())));
                if want >= eps {
                    break;
                }
                eps = want;
                let counters = sol.counters;
                sol = alm_solve(&spec, &config.subsolver, Some(&sol.warm_start()), eps)?;
                sol.counters.alm_iters += counters.alm_iters;
                sol.counters.ssn_iters += counters.ssn_iters;
                sol.counters.cholesky_count += counters.cholesky_count;
            }
            Ok(sol)
        });
        let sol = match step {
            Ok(s) => s,
            Err(e) => {
                trace.fail(e.to_string());
                break;
            }
        };
        warm = Some(sol.warm_start());
        let d = sol.d.dir();
        let d_norm = norm2(d);
        prev_d_norm = Some(d_norm);
        let mut rec = TraceRecord {
            k: k + 1,
            objective: fx,
            metric: None,
            alpha: 0.0,
            d_norm,
            alm_iters: sol.counters.alm_iters,
            ssn_iters: sol.counters.ssn_iters,
            wall_seconds: 0.0,
            backtracks: 0,
            stochastic: None,
        };

        if d_norm <= config.d_tol {
            rec.metric = metric.map(|h| h(&x));
            rec.wall_seconds = start.elapsed().as_secs_f64();
            trace.records.push(rec);
            trace.status = Status::SmallStep;
            break;
        }

        // below this the required decrease is not resolvable in `f`, and
        // shorter trial steps could only be accepted on rounding noise
        let unresolvable = d_norm * d_norm / (2.0 * t) <= 64.0 * f64::EPSILON * fx.max(f64::MIN_POSITIVE);
        let max_j = if unresolvable { 0 } else { config.max_backtracks };
        let ls = match backtrack(y, &x, fx, d, t, config.beta, max_j, orth) {
            Ok(ls) => ls,
            Err(Error::LineSearchStall { steps }) => {
                rec.metric = metric.map(|h| h(&x));
                rec.backtracks = steps + 1;
                rec.wall_seconds = start.elapsed().as_secs_f64();
                trace.records.push(rec);
                if unresolvable {
                    trace.status = Status::RoundingFloor;
                } else {
                    trace.fail(Error::LineSearchStall { steps }.to_string());
                }
                break;
            }
            Err(e) => {
                trace.fail(e.to_string());
                break;
            }
        };

        let rel = (fx - ls.f_new).abs() / fx.abs().max(f64::MIN_POSITIVE);
        x = ls.x_new;
        fx = ls.f_new;
        rec.objective = fx;
        rec.alpha = ls.alpha;
        rec.backtracks = ls.j;
        rec.metric = metric.map(|h| h(&x));
        rec.wall_seconds = start.elapsed().as_secs_f64();
        trace.records.push(rec);
        log::debug!("manppa k={} f={fx:e} |d|={d_norm:e} alpha={}", k + 1, ls.alpha);
        if rel <= config.rel_obj_tol {
            trace.status = Status::RelativeChange;
            break;
        }
    }
    Ok(SolveOutput { x, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{lipschitz_bound, tangent_project};
    use ndarray::array;

    fn small() -> DataMatrix {
        DataMatrix::new(array![
            [0.9, -0.3, 0.4, 1.2, -0.5, 0.05, 0.3],
            [0.1, 0.8, -1.1, 0.3, 0.2, -0.7, 0.2],
            [-0.6, 0.5, 0.7, -0.2, 1.0, 0.4, -0.9]
        ])
        .unwrap()
    }

    #[test]
    fn zero_direction_accepts_unit_step() {
        let y = small();
        let x = SpherePoint::basis(3, 0);
        let d = TangentVector::new(x.clone(), Array1::zeros(3)).unwrap();
        let ls = line_search(&y, &x, &d, 0.1, 0.5).unwrap();
        assert_eq!((ls.alpha, ls.j), (1.0, 0));
    }

    #[test]
    fn ascent_direction_stalls() {
        let y = small();
        let x = project_sphere(array![0.2, 0.5, -0.4].view()).unwrap();
        let g = crate::geometry::euclid_subgradient(&y, &x).unwrap();
        let d = tangent_project(&x, (&g * 10.0).view());
        assert!(matches!(line_search(&y, &x, &d, 1e-3, 0.5), Err(Error::LineSearchStall { .. })));
    }

    #[test]
    fn stationary_start_returns_after_one_iteration() {
        let y = DataMatrix::new(array![[2.0], [0.0]]).unwrap();
        let x0 = SpherePoint::basis(2, 0);
        let out = manppa_solve(&y, &x0, &ManppaConfig::default(), None).unwrap();
        assert_eq!(out.trace.iters(), 1);
        assert_eq!(out.x, x0);
        assert_eq!(out.trace.status, Status::SmallStep);
    }

    #[test]
    fn objective_decreases_monotonically() {
        let y = small();
        let x0 = project_sphere(array![0.2, 0.5, -0.4].view()).unwrap();
        let cfg = ManppaConfig { t: 1.0 / lipschitz_bound(&y).value(), ..Default::default() };
        let out = manppa_solve(&y, &x0, &cfg, None).unwrap();
        assert!(!out.trace.status.is_failure(), "{:?}", out.trace.failure);
        for w in out.trace.records.windows(2) {
            assert!(w[1].objective <= w[0].objective);
        }
        assert!(out.trace.records.len() > 2);
    }

    #[test]
    fn constrained_iterates_stay_in_complement() {
        let y = small();
        let q = array![[1.0], [0.0], [0.0]];
        let x0 = project_sphere(array![0.0, 0.6, -0.8].view()).unwrap();
        let out = manppa_solve_constrained(&y, &x0, q.view(), &ManppaConfig::default(), None).unwrap();
        assert!(out.x.coords()[0].abs() < 1e-12);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let y = small();
        let x0 = SpherePoint::basis(3, 0);
        let cfg = ManppaConfig { beta: 1.0, ..Default::default() };
        assert!(manppa_solve(&y, &x0, &cfg, None).is_err());
    }
}
