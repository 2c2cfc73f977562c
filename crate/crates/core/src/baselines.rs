//! Reference methods: projected and Riemannian subgradient descent, projected
//! subgradient with an adaptive backtracking step, and IRLS for the
//! column-sum-of-norms matrix problem.

use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{euclid_subgradient, l1_objective, project_sphere, smallest_eigvecs, tangent_project, DataMatrix, SpherePoint};
use crate::linalg::norm2;
use crate::stiefel::StiefelPoint;
use crate::trace::{IterateTrace, MetricHook, SolveOutput, Status, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StepSchedule {
    /// `η_k = eta0 · ratio^⌊k/period⌋`
    Geometric { eta0: f64, ratio: f64, period: usize },
    Constant { eta: f64 },
    /// `eta0` for `k < k0`, then `η^{⌊(k−k0)/period⌋+1}`
    Piecewise { eta0: f64, eta: f64, k0: usize, period: usize },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Geometric { eta0: 0.1, ratio: 0.9, period: 50 }
    }
}

impl StepSchedule {
    pub fn step(&self, k: usize) -> f64 {
        match *self {
            StepSchedule::Geometric { eta0, ratio, period } => eta0 * ratio.powi((k / period.max(1)) as i32),
            StepSchedule::Constant { eta } => eta,
            StepSchedule::Piecewise { eta0, eta, k0, period } => {
                if k < k0 {
                    eta0
                } else {
                    eta.powi(((k - k0) / period.max(1) + 1) as i32)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Geometric { eta0, ratio, .. } => eta0 > 0.0 && ratio > 0.0 && ratio <= 1.0,
            StepSchedule::Constant { eta } => eta > 0.0,
            StepSchedule::Piecewise { eta0, eta, .. } => eta0 > 0.0 && eta > 0.0 && eta < 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid step schedule {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubgradientConfig {
    pub schedule: StepSchedule,
    pub max_iters: usize,
    /// `0` disables the relative-change test
    pub rel_obj_tol: f64,
}

impl Default for SubgradientConfig {
    fn default() -> Self {
        Self { schedule: StepSchedule::default(), max_iters: 5000, rel_obj_tol: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MblsConfig {
    pub initial_step: f64,
    pub growth: f64,
    pub max_halvings: usize,
    pub max_iters: usize,
    pub rel_obj_tol: f64,
}

impl Default for MblsConfig {
    fn default() -> Self {
        Self { initial_step: 1e-2, growth: 2.0, max_halvings: 60, max_iters: 1000, rel_obj_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IrlsConfig {
    pub delta: f64,
    pub max_iters: usize,
    pub abs_obj_tol: f64,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        Self { delta: 1e-8, max_iters: 100, abs_obj_tol: 1e-11 }
    }
}

fn check_start(y: &DataMatrix, x0: &SpherePoint) -> Result<()> {
    if x0.dim() != y.n() {
        return Err(Error::DimensionMismatch(format!("x0 has length {}, data has {} rows", x0.dim(), y.n())));
    }
    Ok(())
}

fn step_record(k: usize, objective: f64, alpha: f64, d_norm: f64, secs: f64) -> TraceRecord {
    TraceRecord {
        k,
        objective,
        metric: None,
        alpha,
        d_norm,
        alm_iters: 0,
        ssn_iters: 0,
        wall_seconds: secs,
        backtracks: 0,
        stochastic: None,
    }
}

fn subgradient_run(
    y: &DataMatrix,
    x0: &SpherePoint,
    config: &SubgradientConfig,
    metric: Option<MetricHook<'_>>,
    riemannian: bool,
) -> Result<SolveOutput> {
    check_start(y, x0)?;
    config.schedule.validate()?;
    let start = Instant::now();
    let mut x = x0.clone();
    let mut fx = l1_objective(y, x.coords());
    let mut trace = IterateTrace::new(TraceRecord::initial(fx, metric.map(|h| h(&x))));
    for k in 0..config.max_iters {
        let g = euclid_subgradient(y, &x)?;
        let v = if riemannian { tangent_project(&x, g.view()).into_dir() } else { g };
        let eta = config.schedule.step(k);
        let mut next = x.coords().to_owned();
        next.scaled_add(-eta, &v);
        let x_new = match project_sphere(next.view()) {
            Ok(p) => p,
            Err(e) => {
                trace.fail(e.to_string());
                break;
            }
        };
        let f_new = l1_objective(y, x_new.coords());
        let rel = (fx - f_new).abs() / fx.abs().max(f64::MIN_POSITIVE);
        x = x_new;
        fx = f_new;
        let mut rec = step_record(k + 1, fx, eta, eta * norm2(v.view()), start.elapsed().as_secs_f64());
        rec.metric = metric.map(|h| h(&x));
        trace.records.push(rec);
        if config.rel_obj_tol > 0.0 && rel <= config.rel_obj_tol {
            trace.status = Status::RelativeChange;
            break;
        }
    }
    Ok(SolveOutput { x, trace })
}

/// `x ← proj(x − η_k v)` with `v` a Euclidean subgradient.
pub fn psgm_solve(y: &DataMatrix, x0: &SpherePoint, config: &SubgradientConfig, metric: Option<MetricHook<'_>>) -> Result<SolveOutput> {
    subgradient_run(y, x0, config, metric, false)
}

/// `x ← proj(x − η_k v)` with `v` a Riemannian subgradient.
pub fn rsgm_solve(y: &DataMatrix, x0: &SpherePoint, config: &SubgradientConfig, metric: Option<MetricHook<'_>>) -> Result<SolveOutput> {
    subgradient_run(y, x0, config, metric, true)
}

/// Projected subgradient where each step starts from twice the last accepted
/// one and is halved until the objective strictly decreases.
pub fn psgm_mbls_solve(y: &DataMatrix, x0: &SpherePoint, config: &MblsConfig, metric: Option<MetricHook<'_>>) -> Result<SolveOutput> {
    check_start(y, x0)?;
    if !(config.initial_step > 0.0 && config.growth >= 1.0) {
        return Err(Error::InvalidConfig("MBLS needs initial_step > 0 and growth ≥ 1".into()));
    }
    let start = Instant::now();
    let mut x = x0.clone();
    let mut fx = l1_objective(y, x.coords());
    let mut trace = IterateTrace::new(TraceRecord::initial(fx, metric.map(|h| h(&x))));
    let mut eta = config.initial_step / config.growth;
    for k in 0..config.max_iters {
        let g = euclid_subgradient(y, &x)?;
        let g_norm = norm2(g.view());
        if g_norm == 0.0 {
            trace.records.push(step_record(k + 1, fx, 0.0, 0.0, start.elapsed().as_secs_f64()));
            trace.records.last_mut().unwrap().metric = metric.map(|h| h(&x));
            trace.status = Status::SmallStep;
            break;
        }
        eta *= config.growth;
        let mut accepted = None;
        for h in 0..=config.max_halvings {
            let mut cand = x.coords().to_owned();
            cand.scaled_add(-eta, &g);
            if let Ok(p) = project_sphere(cand.view()) {
                let f_new = l1_objective(y, p.coords());
                if f_new < fx {
                    accepted = Some((p, f_new, h));
                    break;
                }
            }
            eta *= 0.5;
        }
        let Some((x_new, f_new, halvings)) = accepted else {
            let mut rec = step_record(k + 1, fx, 0.0, 0.0, start.elapsed().as_secs_f64());
            rec.metric = metric.map(|h| h(&x));
            rec.backtracks = config.max_halvings;
            trace.records.push(rec);
            trace.status = Status::SmallStep;
            break;
        };
        let rel = (fx - f_new) / fx.abs().max(f64::MIN_POSITIVE);
        x = x_new;
        fx = f_new;
        let mut rec = step_record(k + 1, fx, eta, eta * g_norm, start.elapsed().as_secs_f64());
        rec.metric = metric.map(|h| h(&x));
        rec.backtracks = halvings;
        trace.records.push(rec);
        if rel <= config.rel_obj_tol {
            trace.status = Status::RelativeChange;
            break;
        }
    }
    Ok(SolveOutput { x, trace })
}

/// Per-column residual norms `‖Xᵀy_j‖₂`.
fn residuals(y: &DataMatrix, x: ArrayView2<f64>) -> Array1<f64> {
    let m = x.t().dot(&y.view());
    Array1::from_iter(m.columns().into_iter().map(norm2))
}

/// `1 / max(δ, r)`
pub fn irls_weight(r: f64, delta: f64) -> f64 {
    1.0 / r.max(delta)
}

/// `Σ_j ‖Xᵀy_j‖₂`
pub fn sum_of_norms(y: &DataMatrix, x: ArrayView2<f64>) -> f64 {
    residuals(y, x).sum()
}

/// `Σ_j h_δ(‖Xᵀy_j‖₂)` with `h_δ(r) = r` for `r ≥ δ` and `r²/(2δ) + δ/2` below;
/// the reweighting step is a majorize-minimize step for this function.
pub fn floored_objective(y: &DataMatrix, x: ArrayView2<f64>, delta: f64) -> f64 {
    residuals(y, x)
        .iter()
        .map(|&r| if r >= delta { r } else { r * r / (2.0 * delta) + delta / 2.0 })
        .sum()
}

/// Result of [`irls_solve`]; `objective` in the trace is the floored function.
#[derive(Debug, Clone)]
pub struct IrlsOutput {
    pub x: StiefelPoint,
    pub trace: IterateTrace,
}

pub type MatrixMetricHook<'a> = &'a (dyn Fn(ArrayView2<f64>) -> f64 + Sync);

/// `X ← q smallest eigenvectors of Y W Yᵀ`, started from those of `YYᵀ`.
pub fn irls_solve(y: &DataMatrix, q: usize, config: &IrlsConfig, metric: Option<MatrixMetricHook<'_>>) -> Result<IrlsOutput> {
    let n = y.n();
    if q == 0 || q > n {
        return Err(Error::DegenerateInput(format!("need 1 ≤ q ≤ n, got q={q}, n={n}")));
    }
    if !(config.delta > 0.0) {
        return Err(Error::InvalidConfig(format!("delta must be positive, got {}", config.delta)));
    }
    let start = Instant::now();
    let yv = y.view();
    let mut x = smallest_eigvecs(y.gram().view(), q)?;
    let mut f = floored_objective(y, x.view(), config.delta);
    let mut trace = IterateTrace::new(TraceRecord::initial(f, metric.map(|h| h(x.view()))));
    for k in 0..config.max_iters {
        let w = residuals(y, x.view()).mapv(|r| irls_weight(r, config.delta));
        let weighted: Array2<f64> = &yv * &w;
        let mut m = weighted.dot(&yv.t());
        m = (&m + &m.t()) * 0.5;
        let x_new = smallest_eigvecs(m.view(), q)?;
        let f_new = floored_objective(y, x_new.view(), config.delta);
        let moved = crate::linalg::frobenius((x_new.dot(&x_new.t()) - x.dot(&x.t())).view());
        x = x_new;
        let change = (f - f_new).abs();
        f = f_new;
        let mut rec = step_record(k + 1, f, 1.0, moved, start.elapsed().as_secs_f64());
        rec.metric = metric.map(|h| h(x.view()));
        trace.records.push(rec);
        if change <= config.abs_obj_tol {
            trace.status = Status::RelativeChange;
            break;
        }
    }
    Ok(IrlsOutput { x: StiefelPoint::new(x)?, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
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
    fn schedules() {
        let g = StepSchedule::default();
        assert_eq!(g.step(0), 0.1);
        assert_eq!(g.step(49), 0.1);
        assert!((g.step(50) - 0.09).abs() < 1e-15);
        let p = StepSchedule::Piecewise { eta0: 0.5, eta: 0.5, k0: 10, period: 5 };
        assert_eq!(p.step(9), 0.5);
        assert_eq!(p.step(10), 0.5);
        assert_eq!(p.step(15), 0.25);
        assert_eq!(StepSchedule::Constant { eta: 0.3 }.step(1000), 0.3);
    }

    #[test]
    fn zero_subgradient_leaves_point_fixed() {
        let y = DataMatrix::new(array![[0.0, 0.0], [1.0, -1.0]]).unwrap();
        let x0 = SpherePoint::basis(2, 0);
        let out = psgm_solve(&y, &x0, &SubgradientConfig { max_iters: 3, ..Default::default() }, None).unwrap();
        assert_eq!(out.x, x0);
        let out = psgm_mbls_solve(&y, &x0, &MblsConfig::default(), None).unwrap();
        assert_eq!(out.trace.iters(), 1);
        assert_eq!(out.x, x0);
    }

    #[test]
    fn mbls_strictly_decreases() {
        let y = small();
        let x0 = project_sphere(array![0.2, 0.5, -0.4].view()).unwrap();
        let out = psgm_mbls_solve(&y, &x0, &MblsConfig::default(), None).unwrap();
        let recs = &out.trace.records;
        for w in recs.windows(2) {
            if w[1].alpha > 0.0 {
                assert!(w[1].objective < w[0].objective);
            }
        }
    }

    #[test]
    fn tangent_subgradient_gives_identical_steps() {
        // x = e₁ and rows orthogonal to it: the Euclidean subgradient is tangent
        let y = DataMatrix::new(array![[1.0, -1.0, 1.0], [0.5, 0.2, -0.3], [0.1, 0.4, 0.2]]).unwrap();
        let x0 = project_sphere(array![0.0, 0.6, 0.8].view()).unwrap();
        let g = euclid_subgradient(&y, &x0).unwrap();
        let tg = tangent_project(&x0, g.view());
        let cfg = SubgradientConfig { max_iters: 1, ..Default::default() };
        let a = psgm_solve(&y, &x0, &cfg, None).unwrap();
        let b = rsgm_solve(&y, &x0, &cfg, None).unwrap();
        if tg.dir() == g.view() {
            assert_eq!(a.x, b.x);
        }
    }

    #[test]
    fn irls_weights_and_monotone_surrogate() {
        assert_eq!(irls_weight(2.0, 1e-8), 0.5);
        assert_eq!(irls_weight(0.0, 1e-8), 1e8);
        let y = small();
        let out = irls_solve(&y, 1, &IrlsConfig::default(), None).unwrap();
        for w in out.trace.records.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-10);
        }
    }

    #[test]
    fn irls_exact_structure_first_iteration() {
        let inst = crate::datagen::gen_rsr(5, 3, 20, 0, 4).unwrap();
        let out = irls_solve(&inst.y, 2, &IrlsConfig::default(), None).unwrap();
        let d0 = crate::metrics::subspace_distance(out.x.view(), &inst.s);
        assert!(d0 < 1e-8, "{d0}");
    }
}
