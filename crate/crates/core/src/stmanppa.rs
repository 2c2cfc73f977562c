//! Stochastic manifold proximal point method with closed-form single-sample steps.

use std::time::Instant;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{l1_objective, project_sphere, DataMatrix, SpherePoint, TangentVector};
use crate::linalg::norm2;
use crate::rng::SeededRng;
use crate::trace::{IterateTrace, MetricHook, SolveOutput, Status, StepCase, StochasticInfo, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputPolicy {
    #[default]
    LastIterate,
    /// iterate `k` returned with probability `t_k / Σ t_k`
    WeightedRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StmanppaConfig {
    pub t0: f64,
    pub beta: f64,
    pub epochs: usize,
    pub rel_obj_tol: f64,
    pub output_policy: OutputPolicy,
    pub seed: u64,
}

impl Default for StmanppaConfig {
    fn default() -> Self {
        Self {
            t0: 0.6,
            beta: 0.8,
            epochs: 500,
            rel_obj_tol: 1e-12,
            output_policy: OutputPolicy::LastIterate,
            seed: 0,
        }
    }
}

impl StmanppaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::InvalidConfig(format!("t0 must be positive, got {}", self.t0)));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidConfig(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !(self.rel_obj_tol >= 0.0) {
            return Err(Error::InvalidConfig("rel_obj_tol must be nonnegative".into()));
        }
        Ok(())
    }

    /// `t_k = β^⌊k/p⌋ t₀`
    pub fn step_size(&self, k: usize, p: usize) -> f64 {
        self.beta.powi((k / p.max(1)) as i32) * self.t0
    }
}

/// Direction and branch; allocation-free in the base point.
pub(crate) fn closed_form_dir(x: ArrayView1<f64>, y: ArrayView1<f64>, t: f64) -> (Array1<f64>, StepCase) {
    let yx = y.dot(&x);
    let mu = t * yx;
    let yy = y.dot(&y);
    let (mut d, case) = if (1.0 + mu) * mu / t - t * yy > 0.0 {
        (&x * mu - &y * t, StepCase::PositiveSide)
    } else if (1.0 - mu) * mu / t + t * yy < 0.0 {
        (&y * t - &x * mu, StepCase::NegativeSide)
    } else {
        let denom = t * t * yy - mu * mu;
        let d = if denom > 0.0 && denom.is_finite() {
            (&x * (mu * mu) - &y * (t * mu)) / denom
        } else {
            Array1::zeros(x.len())
        };
        if d.iter().all(|v| v.is_finite()) {
            (d, StepCase::ZeroSet)
        } else {
            (Array1::zeros(x.len()), StepCase::ZeroSet)
        }
    };
    let drift = d.dot(&x);
    d.scaled_add(-drift, &x);
    (d, case)
}

/// Minimizer of `|yᵀ(x + d)| + ‖d‖²/(2t)` over `dᵀx = 0`.
pub fn closed_form_step(x: &SpherePoint, y: ArrayView1<f64>, t: f64) -> Result<(TangentVector, StepCase)> {
    if !(t > 0.0) {
        return Err(Error::InvalidConfig(format!("step size must be positive, got {t}")));
    }
    if y.len() != x.dim() {
        return Err(Error::DimensionMismatch(format!("sample has length {}, point has {}", y.len(), x.dim())));
    }
    let (d, case) = closed_form_dir(x.coords(), y, t);
    Ok((TangentVector::new(x.clone(), d)?, case))
}

/// Residual of the optimality system `0 ∈ d/t + ∂|yᵀ(x+d)|·y − λx`, `dᵀx = 0`,
/// minimized over the multiplier `λ` and the subgradient choice allowed by `case`.
pub fn closed_form_kkt_residual(x: &SpherePoint, y: ArrayView1<f64>, t: f64, d: ArrayView1<f64>, case: StepCase) -> f64 {
    let xv = x.coords();
    let proj = |v: &Array1<f64>| -> Array1<f64> {
        let c = v.dot(&xv);
        v - &(&xv * c)
    };
    let tangency = d.dot(&xv).abs();
    let value = y.dot(&xv) + y.dot(&d);
    let dt = d.to_owned() / t;
    match case {
        StepCase::PositiveSide => norm2(proj(&(&dt + &y)).view()) + tangency + (-value).max(0.0),
        StepCase::NegativeSide => norm2(proj(&(&dt - &y)).view()) + tangency + value.max(0.0),
        StepCase::ZeroSet => {
            let pd = proj(&dt);
            let py = proj(&y.to_owned());
            let pyy = py.dot(&py);
            let s = if pyy > 0.0 { (-pd.dot(&py) / pyy).clamp(-1.0, 1.0) } else { 0.0 };
            norm2((&pd + &(&py * s)).view()) + tangency + value.abs()
        }
    }
}

/// Runs `epochs` passes of `p` sampled steps each; the objective is evaluated
/// once per pass and drives the relative-change stopping test.
pub fn stmanppa_solve(
    y: &DataMatrix,
    x0: &SpherePoint,
    config: &StmanppaConfig,
    metric: Option<MetricHook<'_>>,
) -> Result<SolveOutput> {
    config.validate()?;
    if x0.dim() != y.n() {
        return Err(Error::DimensionMismatch(format!("x0 has length {}, data has {} rows", x0.dim(), y.n())));
    }
    let start = Instant::now();
    let p = y.p();
    let mut rng = SeededRng::new(config.seed);
    let mut picker = SeededRng::new(config.seed ^ 0xA5A5_A5A5_A5A5_A5A5);
    let mut x = x0.clone();
    let mut fx = l1_objective(y, x.coords());
    let mut trace = IterateTrace::new(TraceRecord::initial(fx, metric.map(|h| h(&x))));

    let mut chosen = x.clone();
    let mut weight_sum = 0.0;
    let mut offer = |cand: &SpherePoint, w: f64, picker: &mut SeededRng, chosen: &mut SpherePoint| {
        weight_sum += w;
        if picker.uniform() * weight_sum < w {
            *chosen = cand.clone();
        }
    };

    let mut k = 0usize;
    for epoch in 0..config.epochs {
        let t_k = config.step_size(k, p);
        let mut last_case = StepCase::ZeroSet;
        let mut last_norm = 0.0;
        for _ in 0..p {
            if config.output_policy == OutputPolicy::WeightedRandom {
                offer(&x, t_k, &mut picker, &mut chosen);
            }
            let j = rng.below(p as u64) as usize;
            let (d, case) = closed_form_dir(x.coords(), y.column(j), t_k);
            last_norm = norm2(d.view());
            last_case = case;
            let v = &x.coords() + &d;
            x = project_sphere(v.view())?;
            k += 1;
        }
        let f_new = l1_objective(y, x.coords());
        trace.records.push(TraceRecord {
            k,
            objective: f_new,
            metric: metric.map(|h| h(&x)),
            alpha: 1.0,
            d_norm: last_norm,
            alm_iters: 0,
            ssn_iters: 0,
            wall_seconds: start.elapsed().as_secs_f64(),
            backtracks: 0,
            stochastic: Some(StochasticInfo { epoch, t_k, case: last_case }),
        });
        let rel = (fx - f_new).abs() / fx.abs().max(f64::MIN_POSITIVE);
        fx = f_new;
        if rel <= config.rel_obj_tol {
            trace.status = Status::RelativeChange;
            break;
        }
    }

    let x = match config.output_policy {
        OutputPolicy::LastIterate => x,
        OutputPolicy::WeightedRandom => {
            offer(&x, config.step_size(k, p), &mut picker, &mut chosen);
            chosen
        }
    };
    Ok(SolveOutput { x, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn case_of(x: Array1<f64>, y: Array1<f64>, t: f64) -> (Array1<f64>, StepCase) {
        let x = SpherePoint::new(x).unwrap();
        let (d, c) = closed_form_step(&x, y.view(), t).unwrap();
        (d.into_dir(), c)
    }

    #[test]
    fn parallel_sample_gives_zero_step() {
        let (d, c) = case_of(array![1.0, 0.0], array![1.0, 0.0], 0.5);
        assert_eq!(c, StepCase::PositiveSide);
        assert!(norm2(d.view()) < 1e-16);
    }

    #[test]
    fn orthogonal_sample_gives_zero_step() {
        let (d, c) = case_of(array![1.0, 0.0], array![0.0, 1.0], 1.0);
        assert_eq!(c, StepCase::ZeroSet);
        assert_eq!(d.to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn diagonal_sample() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let (d, c) = case_of(array![1.0, 0.0], array![r, r], 0.2);
        assert_eq!(c, StepCase::PositiveSide);
        assert!(d[0].abs() < 1e-15);
        assert!((d[1] + 0.2 * r).abs() < 1e-15);
        assert!((d[1] + 0.141421).abs() < 1e-6);
    }

    #[test]
    fn zero_sample_is_total() {
        let (d, c) = case_of(array![0.6, 0.8], array![0.0, 0.0], 0.3);
        assert_eq!(c, StepCase::ZeroSet);
        assert_eq!(d.to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn negative_side_mirrors_positive_side() {
        let x = array![0.6, 0.8, 0.0];
        let y = array![1.2, 0.9, 0.1];
        let (dp, cp) = case_of(x.clone(), y.clone(), 0.4);
        let (dn, cn) = case_of(x, -y, 0.4);
        assert_ne!(cp, cn);
        assert!(norm2((&dp - &dn).view()) < 1e-15);
    }

    #[test]
    fn step_size_schedule() {
        let cfg = StmanppaConfig { beta: 0.5, t0: 1.0, ..Default::default() };
        assert_eq!(cfg.step_size(0, 10), 1.0);
        assert_eq!(cfg.step_size(9, 10), 1.0);
        assert_eq!(cfg.step_size(10, 10), 0.5);
        assert_eq!(cfg.step_size(35, 10), 0.125);
    }

    #[test]
    fn single_column_matches_deterministic_iteration() {
        let y = DataMatrix::new(array![[0.5], [0.2], [-0.7]]).unwrap();
        let x0 = project_sphere(array![0.3, 0.9, 0.1].view()).unwrap();
        let cfg = StmanppaConfig { epochs: 5, rel_obj_tol: 0.0, beta: 0.9, ..Default::default() };
        let out = stmanppa_solve(&y, &x0, &cfg, None).unwrap();
        let mut x = x0.clone();
        for k in 0..5 {
            let (d, _) = closed_form_dir(x.coords(), y.column(0), cfg.step_size(k, 1));
            x = project_sphere((&x.coords() + &d).view()).unwrap();
        }
        assert_eq!(out.x, x);
    }

    #[test]
    fn fixed_seed_is_deterministic_and_weighted_policy_returns_an_iterate() {
        let y = DataMatrix::new(array![
            [0.9, -0.3, 0.4, 1.2, -0.5],
            [0.1, 0.8, -1.1, 0.3, 0.2],
            [-0.6, 0.5, 0.7, -0.2, 1.0]
        ])
        .unwrap();
        let x0 = SpherePoint::basis(3, 0);
        let cfg = StmanppaConfig { epochs: 20, seed: 4, ..Default::default() };
        let a = stmanppa_solve(&y, &x0, &cfg, None).unwrap();
        let b = stmanppa_solve(&y, &x0, &cfg, None).unwrap();
        let csv = |o: &SolveOutput| o.trace.to_csv(crate::trace::CsvOptions::default());
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(a.x, b.x);
        let w = StmanppaConfig { output_policy: OutputPolicy::WeightedRandom, ..cfg };
        let c = stmanppa_solve(&y, &x0, &w, None).unwrap();
        assert_eq!(csv(&c), csv(&a));
        assert!((norm2(c.x.coords()) - 1.0).abs() < 1e-12);
    }
}
