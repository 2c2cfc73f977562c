use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::ssn::{ssn_run, SsnParams};
use super::{kkt_residuals, DualState, KktResiduals, SubproblemSpec};
use crate::error::{Error, Result};
use crate::geometry::TangentVector;

/// Parameters of the inexact augmented Lagrangian method.
///
/// The penalty follows `σ_j = min(sigma_cap, growth^(j mod cycle) · σ₀)` with
/// `σ₀ = sigma0` when set and `sigma0_per_t · t` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlmConfig {
    pub sigma0: Option<f64>,
    pub sigma0_per_t: f64,
    pub sigma_cap: f64,
    pub sigma_growth: f64,
    pub sigma_cycle: usize,
    pub max_alm_iters: usize,
    pub ssn: SsnParams,
    /// Inner stopping sequences shrink as `inexact_decay^j`.
    pub inexact_decay: f64,
    /// Outer accuracy schedule `ε_k = max(eps_decay^k, eps_floor)` used by ManPPA.
    pub eps_decay: f64,
    pub eps_floor: f64,
    /// Also cap `ε_k` by `eps_progress · ‖d^{k−1}‖²` so subproblem accuracy
    /// keeps pace with fast local convergence; `None` keeps the plain schedule.
    pub eps_progress: Option<f64>,
    /// Replace the inexactness rules with a fixed `‖∇ψ‖` tolerance.
    pub ssn_tol: Option<f64>,
    /// Inexact-solve parameters of the Newton system; inactive, the system is
    /// solved exactly by Cholesky.
    pub eta_bar: f64,
    pub tau: f64,
}

impl Default for AlmConfig {
    fn default() -> Self {
        Self {
            sigma0: None,
            sigma0_per_t: 3000.0,
            sigma_cap: 1e6,
            sigma_growth: 3.0,
            sigma_cycle: 4,
            max_alm_iters: 30,
            ssn: SsnParams::default(),
            inexact_decay: 0.99,
            eps_decay: 0.1,
            eps_floor: 1e-12,
            eps_progress: Some(0.1),
            ssn_tol: None,
            eta_bar: 0.0,
            tau: 1.0,
        }
    }
}

impl AlmConfig {
    pub fn validate(&self) -> Result<()> {
        self.ssn.validate()?;
        if let Some(s) = self.sigma0 {
            if !(s > 0.0) {
                return Err(Error::InvalidConfig(format!("sigma0 must be positive, got {s}")));
            }
        }
        if !(self.sigma0_per_t > 0.0 && self.sigma_cap > 0.0 && self.sigma_growth >= 1.0) {
            return Err(Error::InvalidConfig("penalty schedule parameters must be positive".into()));
        }
        if self.sigma_cycle == 0 || self.max_alm_iters == 0 {
            return Err(Error::InvalidConfig("sigma_cycle and max_alm_iters must be ≥ 1".into()));
        }
        if !(self.inexact_decay > 0.0 && self.inexact_decay <= 1.0) {
            return Err(Error::InvalidConfig("inexact_decay must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn sigma0_for(&self, t: f64) -> f64 {
        self.sigma0.unwrap_or(self.sigma0_per_t * t)
    }

    pub fn sigma(&self, j: usize, t: f64) -> f64 {
        let exp = (j % self.sigma_cycle) as i32;
        (self.sigma_growth.powi(exp) * self.sigma0_for(t)).min(self.sigma_cap)
    }

    /// Requested subproblem accuracy at outer iteration `k`.
    pub fn eps_for_outer(&self, k: usize) -> f64 {
        self.eps_decay.powi(k.min(i32::MAX as usize) as i32).max(self.eps_floor)
    }

    /// [`eps_for_outer`](Self::eps_for_outer) tightened by the previous step length.
    pub fn eps_for_step(&self, k: usize, prev_d_norm: Option<f64>) -> f64 {
        let base = self.eps_decay.powi(k.min(i32::MAX as usize) as i32);
        let capped = match (self.eps_progress, prev_d_norm) {
            (Some(c), Some(dn)) => base.min(c * dn * dn),
            _ => base,
        };
        capped.max(self.eps_floor)
    }
}

/// Primal and dual iterates carried into the next solve.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub d: Array1<f64>,
    pub y: Array1<f64>,
    pub z: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AlmCounters {
    pub alm_iters: usize,
    pub ssn_iters: usize,
    pub cholesky_count: usize,
}

#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub d: TangentVector,
    pub u: Array1<f64>,
    pub duals: DualState,
    pub kkt: KktResiduals,
    pub counters: AlmCounters,
    pub converged: bool,
    /// `max(primal_res, ‖∇ψ_j(d^{j+1})‖)` after every multiplier update
    pub residual_history: Vec<f64>,
    /// dual function value after every multiplier update
    pub dual_history: Vec<f64>,
    /// [`KktResiduals::max`] of the subproblem after every multiplier update
    pub kkt_history: Vec<f64>,
}

impl SubproblemSolution {
    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            d: self.d.dir().to_owned(),
            y: self.duals.y.clone(),
            z: self.duals.z.clone(),
        }
    }
}

/// Inexact ALM on the subproblem until `max(primal_res, ‖∇ψ‖) ≤ eps`.
///
/// Each inner problem is solved by semismooth Newton until the gradient-norm
/// surrogates of the three classical inexactness conditions hold (ψ is
/// 1-strongly convex, so `ψ(d) − ψ* ≤ ½‖∇ψ(d)‖²`), the gradient is a decade
/// below `eps`, or ψ stops decreasing in floating point. Exhausting the ALM iteration cap returns the last iterate
/// with `converged = false`.
pub fn alm_solve(
    spec: &SubproblemSpec<'_>,
    config: &AlmConfig,
    warm: Option<&WarmStart>,
    eps: f64,
) -> Result<SubproblemSolution> {
    config.validate()?;
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("ALM tolerance must be positive, got {eps}")));
    }
    let n = spec.data().n();
    let p = spec.data().p();
    let m = spec.n_constraints();

    let mut d = Array1::<f64>::zeros(n);
    let mut y = Array1::<f64>::zeros(m);
    let mut z = Array1::<f64>::zeros(p);
    if let Some(ws) = warm {
        if ws.d.len() == n {
            d = ws.d.clone();
        }
        if ws.y.len() == m {
            y = ws.y.clone();
        }
        if ws.z.len() == p {
            z = ws.z.clone();
        }
    }

    let t = spec.t();
    let mut counters = AlmCounters::default();
    let mut residual_history = Vec::new();
    let mut dual_history = Vec::new();
    let mut kkt_history = Vec::new();
    let mut converged = false;
    let mut u = Array1::<f64>::zeros(p);
    let mut sigma = config.sigma(0, t);

    // `j` counts multiplier updates and drives the penalty schedule; an inner
    // solve that hits its iteration cap is continued without a multiplier step.
    let mut j = 0usize;
    for _ in 0..config.max_alm_iters {
        sigma = config.sigma(j, t);
        let duals = DualState { y: y.clone(), z: z.clone(), sigma };
        let decay = config.inexact_decay.powi(j as i32);
        let fixed = config.ssn_tol;
        let floor = 0.1 * eps;

        let (outcome, eval) = ssn_run(spec, &duals, d, &config.ssn, |e| {
            let g = e.grad_norm();
            if let Some(tol) = fixed {
                return g <= tol;
            }
            if g <= floor {
                return true;
            }
            let step = sigma * e.primal_residual(&duals);
            g <= decay / sigma && g <= decay / sigma * step && g <= decay / sigma.powf(1.5) * step
        })?;
        counters.alm_iters += 1;
        counters.ssn_iters += outcome.iters;
        counters.cholesky_count += outcome.cholesky_count;

        let rz = &eval.w - &(&z / sigma) - &eval.u;
        let ry = eval.cons.clone();
        let primal = (rz.dot(&rz) + ry.dot(&ry)).sqrt();
        let grad = outcome.grad_norm();
        d = eval.d;
        u = eval.u;
        if !(outcome.converged || outcome.stalled) {
            continue;
        }
        y.scaled_add(sigma, &ry);
        z.scaled_add(sigma, &rz);
        j += 1;

        let updated = DualState { y: y.clone(), z: z.clone(), sigma };
        dual_history.push(super::dual_objective(spec, &updated));
        kkt_history.push(kkt_residuals(spec, d.view(), u.view(), &updated).max());
        let res = primal.max(grad);
        residual_history.push(res);
        if res <= eps {
            converged = true;
            break;
        }
    }

    let d_tan = spec.project_tangent(d.view());
    let duals = DualState { y, z, sigma };
    let kkt = kkt_residuals(spec, d_tan.view(), u.view(), &duals);
    let d = TangentVector::new(spec.x().clone(), d_tan)?;
    Ok(SubproblemSolution { d, u, duals, kkt, counters, converged, residual_history, dual_history, kkt_history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project_sphere, DataMatrix};
    use ndarray::array;

    fn instance() -> (DataMatrix, crate::geometry::SpherePoint) {
        let y = DataMatrix::new(array![
            [0.9, -0.3, 0.4, 1.2, -0.5, 0.05],
            [0.1, 0.8, -1.1, 0.3, 0.2, -0.7],
            [-0.6, 0.5, 0.7, -0.2, 1.0, 0.4]
        ])
        .unwrap();
        let x = project_sphere(array![0.3, -0.5, 0.8].view()).unwrap();
        (y, x)
    }

    #[test]
    fn penalty_schedule_cycles_and_caps() {
        let cfg = AlmConfig::default();
        let t = 0.01;
        let s: Vec<f64> = (0..6).map(|j| cfg.sigma(j, t)).collect();
        assert!((s[0] - 30.0).abs() < 1e-12);
        assert!((s[3] - 810.0).abs() < 1e-9);
        assert_eq!(s[4], s[0]);
        assert_eq!(cfg.sigma(3, 1000.0), 1e6);
        assert_eq!(cfg.eps_for_outer(0), 1.0);
        assert_eq!(cfg.eps_for_outer(40), 1e-12);
    }

    #[test]
    fn converges_to_small_kkt_residual() {
        let (y, x) = instance();
        let spec = SubproblemSpec::new(&y, &x, 0.2, None).unwrap();
        let sol = alm_solve(&spec, &AlmConfig::default(), None, 1e-10).unwrap();
        assert!(sol.converged);
        assert!(sol.kkt.max() < 1e-8, "{:?}", sol.kkt);
        assert!(sol.d.dir().dot(&x.coords()).abs() < 1e-14);
    }

    #[test]
    fn warm_start_at_solution_is_cheap() {
        let (y, x) = instance();
        let spec = SubproblemSpec::new(&y, &x, 0.2, None).unwrap();
        let cfg = AlmConfig::default();
        let first = alm_solve(&spec, &cfg, None, 1e-9).unwrap();
        let again = alm_solve(&spec, &cfg, Some(&first.warm_start()), 1e-9).unwrap();
        assert!(again.counters.alm_iters <= first.counters.alm_iters);
        assert!(again.kkt.max() <= first.kkt.max() * 10.0 + 1e-12);
    }

    #[test]
    fn rejects_bad_tolerance() {
        let (y, x) = instance();
        let spec = SubproblemSpec::new(&y, &x, 0.2, None).unwrap();
        assert!(alm_solve(&spec, &AlmConfig::default(), None, 0.0).is_err());
    }
}
