//! Tangent-space proximal subproblem
//!
//! ```text
//!   min_{d,u}  ½‖d‖² + t‖u‖₁   s.t.  Yᵀd + c = u,  dᵀ[Q, x] = 0,   c = Yᵀx
//! ```
//!
//! solved by an inexact augmented Lagrangian method whose inner problem, after
//! eliminating `u` through soft-thresholding, is the minimization of the
//! strongly convex, once differentiable function `ψ(d)`. That inner problem is
//! handled by a semismooth Newton method with exact Cholesky solves.
//!
//! `Q` is an optional block of orthonormal columns orthogonal to `x`; it is
//! empty for the plain sphere problem and carries previously found columns in
//! sequential mode.

mod alm;
mod ssn;

pub use alm::{alm_solve, AlmConfig, AlmCounters, SubproblemSolution, WarmStart};
pub use ssn::{ssn_solve, SsnOutcome, SsnParams};

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::geometry::{DataMatrix, SpherePoint};
use crate::linalg::{frobenius, norm2};

/// One instance of the subproblem at base point `x` with proximal step `t`.
#[derive(Debug, Clone)]
pub struct SubproblemSpec<'a> {
    data: &'a DataMatrix,
    x: SpherePoint,
    c: Array1<f64>,
    t: f64,
    /// `[Q, x]`, n×(ℓ+1)
    constraints: Array2<f64>,
}

impl<'a> SubproblemSpec<'a> {
    pub fn new(
        data: &'a DataMatrix,
        x: &SpherePoint,
        t: f64,
        extra_orth: Option<ArrayView2<f64>>,
    ) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidConfig(format!("proximal step t must be positive, got {t}")));
        }
        let n = data.n();
        if x.dim() != n {
            return Err(Error::DimensionMismatch(format!(
                "base point has length {}, data has {} rows",
                x.dim(),
                n
            )));
        }
        let xcol = x.coords().insert_axis(Axis(1));
        let constraints = match extra_orth {
            Some(q) if q.ncols() > 0 => {
                if q.nrows() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "extra constraint block has {} rows, expected {n}",
                        q.nrows()
                    )));
                }
                let ortho = frobenius((q.t().dot(&q) - Array2::<f64>::eye(q.ncols())).view());
                let cross = norm2(q.t().dot(&x.coords()).view());
                if ortho > 1e-10 || cross > 1e-10 {
                    return Err(Error::DegenerateInput(format!(
                        "extra constraints must be orthonormal and orthogonal to x \
                         (‖QᵀQ−I‖ = {ortho:e}, ‖Qᵀx‖ = {cross:e})"
                    )));
                }
                concatenate![Axis(1), q, xcol]
            }
            _ => xcol.to_owned(),
        };
        Ok(Self { data, c: data.correlations(x.coords()), x: x.clone(), t, constraints })
    }

    pub fn data(&self) -> &DataMatrix {
        self.data
    }

    pub fn x(&self) -> &SpherePoint {
        &self.x
    }

    pub fn c(&self) -> ArrayView1<'_, f64> {
        self.c.view()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `[Q, x]`
    pub fn constraints(&self) -> ArrayView2<'_, f64> {
        self.constraints.view()
    }

    /// Number of equality constraints on `d`, i.e. `ℓ + 1`.
    pub fn n_constraints(&self) -> usize {
        self.constraints.ncols()
    }

    /// Removes the components of `d` along `[Q, x]`.
    pub fn project_tangent(&self, d: ArrayView1<f64>) -> Array1<f64> {
        let coef = self.constraints.t().dot(&d);
        &d - &self.constraints.dot(&coef)
    }

    /// Primal objective `‖Yᵀ(x + d)‖₁ + ‖d‖²/(2t)`.
    pub fn primal_objective(&self, d: ArrayView1<f64>) -> f64 {
        let l1: f64 = (self.data.correlations(d) + &self.c).iter().map(|v| v.abs()).sum();
        l1 + d.dot(&d) / (2.0 * self.t)
    }
}

/// Multipliers of the augmented Lagrangian with the current penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    /// multipliers of `dᵀ[Q, x] = 0`
    pub y: Array1<f64>,
    /// multiplier of `Yᵀd + c = u`
    pub z: Array1<f64>,
    pub sigma: f64,
}

impl DualState {
    pub fn zeros(spec: &SubproblemSpec<'_>, sigma: f64) -> Self {
        Self {
            y: Array1::zeros(spec.n_constraints()),
            z: Array1::zeros(spec.data.p()),
            sigma,
        }
    }
}

/// KKT residuals of a primal–dual point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    /// `sqrt(‖Yᵀd + c − u‖² + ‖dᵀ[Q,x]‖²)`
    pub primal_res: f64,
    /// `‖d + Yz + [Q,x]y‖`
    pub dual_res: f64,
    /// `‖u − soft(u + z, t)‖ + max(0, ‖z‖_∞ − t)`
    pub compl_res: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal_res.max(self.dual_res).max(self.compl_res)
    }
}

/// Componentwise `sign(w_i)·max(|w_i| − τ, 0)`.
pub fn soft_threshold(w: ArrayView1<f64>, tau: f64) -> Array1<f64> {
    w.mapv(|v| v.signum() * (v.abs() - tau).max(0.0))
}

/// Projection onto `[−τ, τ]ⁿ`; the Moreau complement of [`soft_threshold`].
pub fn clip(w: ArrayView1<f64>, tau: f64) -> Array1<f64> {
    w.mapv(|v| v.clamp(-tau, tau))
}

/// Diagonal of the chosen generalized Jacobian element of `prox_{h/σ}`:
/// `q_i = 0` where `|w_i| ≤ threshold`, `1` otherwise.
pub fn active_diag(w: ArrayView1<f64>, threshold: f64) -> Array1<f64> {
    w.mapv(|v| if v.abs() <= threshold { 0.0 } else { 1.0 })
}

/// `ψ(d)` together with its gradient and the shifted residual `w`.
#[derive(Debug, Clone)]
pub(crate) struct PsiEval {
    pub d: Array1<f64>,
    /// low-order part of the iterate; `d + d_lo` is the point evaluated
    pub d_lo: Array1<f64>,
    pub value: f64,
    pub grad: Array1<f64>,
    pub w: Array1<f64>,
    /// `soft_threshold(w, t/σ)`
    pub u: Array1<f64>,
    /// `[Q,x]ᵀd`
    pub cons: Array1<f64>,
}

impl PsiEval {
    pub fn grad_norm(&self) -> f64 {
        norm2(self.grad.view())
    }

    /// `(Yᵀd + c − u, [Q,x]ᵀd)` stacked, as a norm.
    pub fn primal_residual(&self, duals: &DualState) -> f64 {
        let rz = &self.w - &(&duals.z / duals.sigma) - &self.u;
        (rz.dot(&rz) + self.cons.dot(&self.cons)).sqrt()
    }
}

pub(crate) fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// `Mᵀ(d + d_lo) + Σ offsets`, column by column, with error-free
/// transformations.
///
/// At the solution these sums nearly cancel and are then scaled by `σ`, so
/// plain rounding of the O(1) terms would set a floor of about `σ·ε` on the
/// recovered multipliers.
fn compensated_affine(
    m: ArrayView2<f64>,
    d: ArrayView1<f64>,
    d_lo: ArrayView1<f64>,
    offsets: &[ArrayView1<f64>],
) -> Array1<f64> {
    Array1::from_iter(m.columns().into_iter().enumerate().map(|(j, col)| {
        let (mut s, mut err) = (0.0, 0.0);
        for ((&a, &b), &lo) in col.iter().zip(d.iter()).zip(d_lo.iter()) {
            let p = a * b;
            let (t, e) = two_sum(s, p);
            s = t;
            err += e + a.mul_add(b, -p) + a * lo;
        }
        for off in offsets {
            let (t, e) = two_sum(s, off[j]);
            s = t;
            err += e;
        }
        s + err
    }))
}

pub(crate) fn psi_eval(d: Array1<f64>, spec: &SubproblemSpec<'_>, duals: &DualState) -> PsiEval {
    let d_lo = Array1::zeros(d.len());
    psi_eval_split(d, d_lo, spec, duals)
}

/// [`psi_eval`] at `d + d_lo`. Near the solution one unit in the last place
/// of `d` moves `∇ψ` by about `σ‖Y‖²` ulps, which the low-order part absorbs.
pub(crate) fn psi_eval_split(d: Array1<f64>, d_lo: Array1<f64>, spec: &SubproblemSpec<'_>, duals: &DualState) -> PsiEval {
    let sigma = duals.sigma;
    let a = spec.constraints();
    let cons = compensated_affine(a, d.view(), d_lo.view(), &[]);
    let y_scaled = &duals.y / sigma;
    let shifted_cons = compensated_affine(a, d.view(), d_lo.view(), &[y_scaled.view()]);
    let z_scaled = &duals.z / sigma;
    let w = compensated_affine(spec.data.view(), d.view(), d_lo.view(), &[spec.c.view(), z_scaled.view()]);
    let u = soft_threshold(w.view(), spec.t / sigma);
    // equals w − u, exact on the active set
    let resid = clip(w.view(), spec.t / sigma);

    let value = 0.5 * d.dot(&d) + 0.5 * sigma * shifted_cons.dot(&shifted_cons)
        - duals.y.dot(&duals.y) / (2.0 * sigma)
        - duals.z.dot(&duals.z) / (2.0 * sigma)
        + spec.t * u.iter().map(|v| v.abs()).sum::<f64>()
        + 0.5 * sigma * resid.dot(&resid);

    let mut grad = &d + &d_lo;
    grad += &(a.dot(&shifted_cons) * sigma);
    grad += &(spec.data.view().dot(&resid) * sigma);
    PsiEval { d, d_lo, value, grad, w, u, cons }
}

/// `ψ(d)` and `∇ψ(d)` for the given multipliers and penalty.
pub fn psi_value_grad(d: ArrayView1<f64>, spec: &SubproblemSpec<'_>, duals: &DualState) -> (f64, Array1<f64>) {
    let e = psi_eval(d.to_owned(), spec, duals);
    (e.value, e.grad)
}

/// KKT residuals of `(d, u; y, z)` for the subproblem.
pub fn kkt_residuals(
    spec: &SubproblemSpec<'_>,
    d: ArrayView1<f64>,
    u: ArrayView1<f64>,
    duals: &DualState,
) -> KktResiduals {
    let a = spec.constraints();
    let cons = a.t().dot(&d);
    let rz = spec.data.correlations(d) + &spec.c - &u;
    let primal_res = (rz.dot(&rz) + cons.dot(&cons)).sqrt();

    let stat = &d + &spec.data.view().dot(&duals.z) + &a.dot(&duals.y);
    let dual_res = norm2(stat.view());

    let shifted = &u + &duals.z;
    let compl = &u - &soft_threshold(shifted.view(), spec.t);
    let zmax = duals.z.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let compl_res = norm2(compl.view()) + (zmax - spec.t).max(0.0);
    KktResiduals { primal_res, dual_res, compl_res }
}

/// Dual function `−½‖Yz + [Q,x]y‖² + cᵀz`, maximized subject to `‖z‖_∞ ≤ t`.
/// Multipliers enter the Lagrangian as `+zᵀ(Yᵀd + c − u)`.
pub fn dual_objective(spec: &SubproblemSpec<'_>, duals: &DualState) -> f64 {
    let v = spec.data.view().dot(&duals.z) + spec.constraints().dot(&duals.y);
    -0.5 * v.dot(&v) + spec.c.dot(&duals.z)
}
