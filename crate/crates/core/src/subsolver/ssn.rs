use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{psi_eval, psi_eval_split, two_sum, DualState, PsiEval, SubproblemSpec};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Armijo and iteration limits of the semismooth Newton method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SsnParams {
    /// sufficient-decrease constant, in (0, 1/2)
    pub mu: f64,
    /// backtracking factor, in (0, 1)
    pub delta: f64,
    pub max_iters: usize,
    pub max_backtracks: usize,
}

impl Default for SsnParams {
    fn default() -> Self {
        Self { mu: 0.1, delta: 0.5, max_iters: 20, max_backtracks: 50 }
    }
}

impl SsnParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu < 0.5) {
            return Err(Error::InvalidConfig(format!("armijo mu must lie in (0, 1/2), got {}", self.mu)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!("armijo delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SsnOutcome {
    pub d: Array1<f64>,
    pub iters: usize,
    pub cholesky_count: usize,
    pub converged: bool,
    /// Armijo search found no decrease; ψ is at its floating-point floor.
    pub stalled: bool,
    /// ‖∇ψ‖ at every iterate, starting with `d_init`
    pub grad_history: Vec<f64>,
    /// ψ at every iterate, starting with `d_init`
    pub psi_history: Vec<f64>,
}

impl SsnOutcome {
    pub fn grad_norm(&self) -> f64 {
        *self.grad_history.last().unwrap_or(&f64::INFINITY)
    }
}

/// Semismooth Newton method for `∇ψ(d) = 0`, stopping once `‖∇ψ(d)‖₂ ≤ tolerance`.
///
/// Hitting the iteration cap is not an error; the last iterate is returned with
/// `converged = false`.
pub fn ssn_solve(
    spec: &SubproblemSpec<'_>,
    duals: &DualState,
    d_init: Array1<f64>,
    tolerance: f64,
    params: &SsnParams,
) -> Result<SsnOutcome> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidConfig(format!("SSN tolerance must be positive, got {tolerance}")));
    }
    ssn_run(spec, duals, d_init, params, |e| e.grad_norm() <= tolerance).map(|(o, _)| o)
}

/// Generalized Jacobian `V = I + σ Y_J Y_Jᵀ + σ [Q,x][Q,x]ᵀ` with `J = {i : |w_i| ≤ t/σ}`.
pub(crate) fn generalized_jacobian(spec: &SubproblemSpec<'_>, sigma: f64, w: &Array1<f64>) -> Array2<f64> {
    let n = spec.data().n();
    let threshold = spec.t() / sigma;
    let inactive: Vec<usize> = w
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() <= threshold)
        .map(|(i, _)| i)
        .collect();
    let mut v = Array2::<f64>::eye(n);
    if !inactive.is_empty() {
        let yj = spec.data().view().select(Axis(1), &inactive);
        v.scaled_add(sigma, &yj.dot(&yj.t()));
    }
    let a = spec.constraints();
    v.scaled_add(sigma, &a.dot(&a.t()));
    v
}

pub(crate) fn ssn_run<F>(
    spec: &SubproblemSpec<'_>,
    duals: &DualState,
    d_init: Array1<f64>,
    params: &SsnParams,
    mut stop: F,
) -> Result<(SsnOutcome, PsiEval)>
where
    F: FnMut(&PsiEval) -> bool,
{
    params.validate()?;
    let mut eval = psi_eval(d_init, spec, duals);
    let mut grad_history = vec![eval.grad_norm()];
    let mut psi_history = vec![eval.value];
    let mut iters = 0;
    let mut cholesky_count = 0;
    let mut converged = stop(&eval);
    let mut stalled = false;

    while !converged && iters < params.max_iters {
        let v_mat = generalized_jacobian(spec, duals.sigma, &eval.w);
        let chol = Cholesky::factor_regularized(v_mat.view(), 1e-12)?;
        cholesky_count += 1;
        let dir = chol.solve((-&eval.grad).view());
        let slope = eval.grad.dot(&dir);

        // below this predicted decrease ψ differences are rounding noise and
        // the gradient norm serves as merit function instead
        let noise = 16.0 * f64::EPSILON * eval.value.abs().max(1.0);
        let g_norm = eval.grad_norm();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=params.max_backtracks {
            let mut hi = eval.d.clone();
            let mut lo = eval.d_lo.clone();
            for ((h, l), &g) in hi.iter_mut().zip(lo.iter_mut()).zip(dir.iter()) {
                let (s, e) = two_sum(*h, step * g);
                (*h, *l) = two_sum(s, *l + e);
            }
            let trial = psi_eval_split(hi, lo, spec, duals);
            let predicted = params.mu * step * slope;
            let resolvable = -predicted > noise;
            let armijo = resolvable && trial.value <= eval.value + predicted;
            let merit = !resolvable && trial.grad_norm() <= 0.5 * g_norm;
            if armijo || merit {
                accepted = Some(trial);
                break;
            }
            if !resolvable {
                break;
            }
            step *= params.delta;
        }
        let Some(next) = accepted else {
            stalled = true;
            break;
        };
        eval = next;
        iters += 1;
        grad_history.push(eval.grad_norm());
        psi_history.push(eval.value);
        converged = stop(&eval);
    }

    let outcome = SsnOutcome {
        d: eval.d.clone(),
        iters,
        cholesky_count,
        converged,
        stalled,
        grad_history,
        psi_history,
    };
    Ok((outcome, eval))
}
