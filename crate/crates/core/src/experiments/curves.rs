use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{InstanceSpec, SolverEntry};
use super::runner::{run_solver, SolverSpec};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, norm2};
use crate::manppa::ManppaConfig;

fn default_threshold() -> f64 {
    0.1
}

fn default_solver() -> SolverEntry {
    SolverEntry { spec: SolverSpec::Manppa { config: ManppaConfig::default() }, label: None }
}

/// Outlier tolerance curve for subspace recovery: for each `p2`, the smallest
/// `p1` with mean angle below `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsrCurveSpec {
    pub n: usize,
    /// inlier dimension, `n − 1` when absent
    #[serde(default)]
    pub d: Option<usize>,
    pub p1_grid: Vec<usize>,
    pub p2_grid: Vec<usize>,
    pub trials: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_solver")]
    pub solver: SolverEntry,
    #[serde(default)]
    pub base_seed: u64,
}

impl RsrCurveSpec {
    pub fn desk() -> Self {
        Self {
            n: 30,
            d: None,
            p1_grid: (60..=260).step_by(40).collect(),
            p2_grid: (40..=600).step_by(140).collect(),
            trials: 3,
            threshold: 0.1,
            solver: default_solver(),
            base_seed: 0,
        }
    }

    pub fn full() -> Self {
        Self {
            p1_grid: (60..=260).step_by(10).collect(),
            p2_grid: (40..=600).step_by(40).collect(),
            trials: 10,
            ..Self::desk()
        }
    }
}

/// Sample-complexity curve for dictionary learning: for each `n`, the smallest
/// `p = 2n + offset` with mean angle below `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdlCurveSpec {
    pub n_grid: Vec<usize>,
    pub p_offsets: Vec<usize>,
    pub gamma: f64,
    pub trials: usize,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_solver")]
    pub solver: SolverEntry,
    #[serde(default)]
    pub base_seed: u64,
}

impl OdlCurveSpec {
    pub fn desk() -> Self {
        Self {
            n_grid: vec![5, 10, 15],
            p_offsets: (10..=800).step_by(30).collect(),
            gamma: 0.1,
            trials: 3,
            threshold: 0.1,
            solver: default_solver(),
            base_seed: 0,
        }
    }

    pub fn full() -> Self {
        Self {
            n_grid: (5..=50).step_by(5).collect(),
            p_offsets: (10..=800).step_by(10).collect(),
            trials: 10,
            ..Self::desk()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRanges {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub kind: String,
    /// highest degree first
    pub coefficients: Vec<f64>,
    /// Euclidean norm of the fit residuals
    pub residual: f64,
    pub ranges: FitRanges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// grid coordinate being scanned for each outer value
    pub x: usize,
    pub outer: usize,
    pub mean_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveOutput {
    /// `(p1, p2)` or `(n, p)` pairs
    pub pairs: Vec<(usize, usize)>,
    /// outer grid values with no qualifying point
    pub omitted: Vec<usize>,
    pub evaluated: Vec<CurvePoint>,
    pub fit: Option<Fit>,
}

/// First grid value whose metric is below `threshold`, scanning in order.
pub fn smallest_qualifying(grid: &[usize], mut metric: impl FnMut(usize) -> f64, threshold: f64) -> Option<usize> {
    grid.iter().copied().find(|&g| metric(g) < threshold)
}

fn polyfit(xs: &[f64], ys: &[f64], degree: usize, kind: &str) -> Result<Fit> {
    if xs.len() != ys.len() || xs.len() <= degree {
        return Err(Error::DegenerateInput(format!("{kind} fit needs more than {degree} points, got {}", xs.len())));
    }
    let a = Array2::from_shape_fn((xs.len(), degree + 1), |(i, j)| xs[i].powi((degree - j) as i32));
    let b = Array1::from(ys.to_vec());
    let c = lstsq(a.view(), b.view())?;
    let resid = &a.dot(&c) - &b;
    let span = |v: &[f64]| [v.iter().copied().fold(f64::INFINITY, f64::min), v.iter().copied().fold(f64::NEG_INFINITY, f64::max)];
    Ok(Fit { kind: kind.into(), coefficients: c.to_vec(), residual: norm2(resid.view()), ranges: FitRanges { x: span(xs), y: span(ys) } })
}

/// Least-squares `y ≈ a x² + b x + c`.
pub fn fit_quadratic(pairs: &[(f64, f64)]) -> Result<Fit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    polyfit(&xs, &ys, 2, "quadratic")
}

/// Least-squares `log y ≈ a log x + b`.
pub fn fit_loglog(pairs: &[(f64, f64)]) -> Result<Fit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    polyfit(&xs, &ys, 1, "loglog_linear")
}

/// Mean final metric over `trials` seeds; a failed run counts as `π/2`.
pub fn mean_metric(instance: &InstanceSpec, solver: &SolverEntry, base_seed: u64, trials: usize) -> f64 {
    // collected first so the summation order does not depend on scheduling
    let values: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = base_seed.wrapping_add(t);
            instance
                .generate(seed)
                .and_then(|inst| run_solver(&inst, &solver.spec, seed))
                .map_or(std::f64::consts::FRAC_PI_2, |o| if o.status.is_failure() { std::f64::consts::FRAC_PI_2 } else { o.final_metric })
        })
        .collect();
    values.iter().sum::<f64>() / trials.max(1) as f64
}

fn scan(
    outer: &[usize],
    inner: impl Fn(usize) -> Vec<usize> + Sync,
    instance: impl Fn(usize, usize) -> InstanceSpec + Sync,
    solver: &SolverEntry,
    base_seed: u64,
    trials: usize,
    threshold: f64,
) -> (Vec<(usize, usize)>, Vec<usize>, Vec<CurvePoint>) {
    let per_outer: Vec<(usize, Option<usize>, Vec<CurvePoint>)> = outer
        .par_iter()
        .map(|&o| {
            let mut evaluated = Vec::new();
            let found = smallest_qualifying(
                &inner(o),
                |x| {
                    let m = mean_metric(&instance(o, x), solver, base_seed, trials);
                    evaluated.push(CurvePoint { x, outer: o, mean_metric: m });
                    m
                },
                threshold,
            );
            (o, found, evaluated)
        })
        .collect();
    let mut pairs = Vec::new();
    let mut omitted = Vec::new();
    let mut evaluated = Vec::new();
    for (o, found, ev) in per_outer {
        match found {
            Some(x) => pairs.push((o, x)),
            None => omitted.push(o),
        }
        evaluated.extend(ev);
    }
    (pairs, omitted, evaluated)
}

pub fn rsr_tolerance_curve(spec: &RsrCurveSpec) -> Result<CurveOutput> {
    let d = spec.d.unwrap_or(spec.n.saturating_sub(1));
    let (found, omitted, evaluated) = scan(
        &spec.p2_grid,
        |_| spec.p1_grid.clone(),
        |p2, p1| InstanceSpec::Rsr { n: spec.n, d, p1, p2 },
        &spec.solver,
        spec.base_seed,
        spec.trials,
        spec.threshold,
    );
    let pairs: Vec<(usize, usize)> = found.into_iter().map(|(p2, p1)| (p1, p2)).collect();
    let fit = fit_quadratic(&pairs.iter().map(|&(a, b)| (a as f64, b as f64)).collect::<Vec<_>>()).ok();
    Ok(CurveOutput { pairs, omitted, evaluated, fit })
}

pub fn odl_fit_curve(spec: &OdlCurveSpec) -> Result<CurveOutput> {
    let (pairs, omitted, evaluated) = scan(
        &spec.n_grid,
        |n| spec.p_offsets.iter().map(|o| 2 * n + o).collect(),
        |n, p| InstanceSpec::Odl { n, p: Some(p), gamma: spec.gamma },
        &spec.solver,
        spec.base_seed,
        spec.trials,
        spec.threshold,
    );
    let fit = fit_loglog(&pairs.iter().map(|&(a, b)| (a as f64, b as f64)).collect::<Vec<_>>()).ok();
    Ok(CurveOutput { pairs, omitted, evaluated, fit })
}

/// Plot-ready table of the evaluated grid points.
pub fn curve_points_csv(out: &CurveOutput, outer_name: &str, inner_name: &str) -> String {
    let mut s = format!("{outer_name},{inner_name},mean_metric\n");
    for p in &out.evaluated {
        s.push_str(&format!("{},{},{}\n", p.outer, p.x, p.mean_metric));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_qualifying_matches_exhaustive_scan() {
        let grid: Vec<usize> = (60..=260).step_by(10).collect();
        for cut in [55, 60, 175, 260, 300] {
            let mask = |p: usize| if p >= cut { 0.01 } else { 1.0 };
            let expected = grid.iter().copied().filter(|&p| mask(p) < 0.1).min();
            assert_eq!(smallest_qualifying(&grid, mask, 0.1), expected);
        }
    }

    #[test]
    fn exact_quadratic_is_recovered() {
        let pairs: Vec<(f64, f64)> = (0..8).map(|i| {
            let x = 60.0 + 20.0 * i as f64;
            (x, 0.01 * x * x - 0.5 * x + 3.0)
        }).collect();
        let fit = fit_quadratic(&pairs).unwrap();
        for (c, e) in fit.coefficients.iter().zip([0.01, -0.5, 3.0]) {
            assert!((c - e).abs() < 1e-10, "{c} vs {e}");
        }
        assert!(fit.residual < 1e-9);
        assert_eq!(fit.ranges.x, [60.0, 200.0]);
        assert!(fit_quadratic(&pairs[..2]).is_err());
    }

    #[test]
    fn exact_power_law_is_recovered() {
        let pairs: Vec<(f64, f64)> = [5.0, 10.0, 20.0, 40.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(1.7))).collect();
        let fit = fit_loglog(&pairs).unwrap();
        assert!((fit.coefficients[0] - 1.7).abs() < 1e-10);
        assert!((fit.coefficients[1] - 3.0_f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn mean_over_trials_matches_manual_average() {
        let inst = InstanceSpec::Rsr { n: 6, d: 5, p1: 30, p2: 10 };
        let solver = default_solver();
        let manual: f64 = (0..3u64)
            .map(|s| run_solver(&inst.generate(10 + s).unwrap(), &solver.spec, 10 + s).unwrap().final_metric)
            .sum::<f64>()
            / 3.0;
        assert_eq!(mean_metric(&inst, &solver, 10, 3), manual);
    }
}
