//! Sphere and Stiefel geometry for `f(x) = ‖Yᵀx‖₁`.
//!
//! Points on the unit sphere, tangent vectors, the normalization retraction,
//! objective and subgradient evaluation. Subgradients use the selection
//! `sign(0) = 0` everywhere so that every solver is deterministic at kinks.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, frobenius, norm2};

const SPHERE_TOL: f64 = 1e-12;
const TANGENT_TOL: f64 = 1e-10;
const ORTHONORMAL_TOL: f64 = 1e-10;

/// Observation matrix `Y` (n×p); columns are data points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix(Array2<f64>);

impl DataMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (n, p) = entries.dim();
        if n == 0 || p == 0 {
            return Err(Error::DegenerateInput(format!("data matrix must be non-empty, got {n}x{p}")));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateInput("data matrix has non-finite entries".into()));
        }
        Ok(Self(entries))
    }

    /// Ambient dimension.
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    /// Number of samples.
    pub fn p(&self) -> usize {
        self.0.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.0.column(j)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// `Yᵀx`
    pub fn correlations(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.0.t().dot(&x)
    }

    /// `Y Yᵀ`
    pub fn gram(&self) -> Array2<f64> {
        self.0.dot(&self.0.t())
    }
}

/// Unit vector in ℝⁿ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint(Array1<f64>);

impl SpherePoint {
    /// Wraps `coords` after checking `|‖coords‖₂ − 1| ≤ 1e-12`.
    pub fn new(coords: Array1<f64>) -> Result<Self> {
        let nrm = norm2(coords.view());
        if (nrm - 1.0).abs() > SPHERE_TOL {
            return Err(Error::DegenerateInput(format!("point is off the sphere (‖x‖ = {nrm})")));
        }
        Ok(Self(coords))
    }

    /// Standard basis vector `e_i` in ℝⁿ.
    pub fn basis(n: usize, i: usize) -> Self {
        let mut v = Array1::zeros(n);
        v[i] = 1.0;
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }

    pub fn negated(&self) -> Self {
        Self(-&self.0)
    }
}

/// Direction `d` with `dᵀx = 0` at a base point `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: SpherePoint,
    dir: Array1<f64>,
}

impl TangentVector {
    pub fn new(base: SpherePoint, dir: Array1<f64>) -> Result<Self> {
        if dir.len() != base.dim() {
            return Err(Error::DimensionMismatch(format!(
                "tangent direction has length {}, base point has {}",
                dir.len(),
                base.dim()
            )));
        }
        let inner = dir.dot(&base.0);
        if inner.abs() > TANGENT_TOL * norm2(dir.view()).max(1.0) {
            return Err(Error::DegenerateInput(format!("direction is not tangent (dᵀx = {inner:e})")));
        }
        Ok(Self { base, dir })
    }

    pub fn base(&self) -> &SpherePoint {
        &self.base
    }

    pub fn dir(&self) -> ArrayView1<'_, f64> {
        self.dir.view()
    }

    pub fn norm(&self) -> f64 {
        norm2(self.dir.view())
    }

    pub fn into_dir(self) -> Array1<f64> {
        self.dir
    }
}

/// Orthonormal basis of a subspace, stored column-wise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceBasis(Array2<f64>);

impl SubspaceBasis {
    pub fn new(basis: Array2<f64>) -> Result<Self> {
        let d = basis.ncols();
        let gram = basis.t().dot(&basis);
        let err = frobenius((gram - Array2::<f64>::eye(d)).view());
        if err > ORTHONORMAL_TOL {
            return Err(Error::DegenerateInput(format!(
                "basis columns are not orthonormal (‖BᵀB − I‖_F = {err:e})"
            )));
        }
        Ok(Self(basis))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn ambient_dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    /// Orthogonal projector onto the complement, `I − B Bᵀ`.
    pub fn complement_projector(&self) -> Array2<f64> {
        Array2::<f64>::eye(self.ambient_dim()) - self.0.dot(&self.0.t())
    }
}

/// Upper bound on the ℓ2-Lipschitz constant of `f`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LipschitzBound(pub f64);

impl LipschitzBound {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn check_dims(y: &DataMatrix, len: usize) -> Result<()> {
    if y.n() != len {
        return Err(Error::DimensionMismatch(format!(
            "vector has length {len}, data has {} rows",
            y.n()
        )));
    }
    Ok(())
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Normalization retraction `v ↦ v / ‖v‖₂`.
pub fn project_sphere(v: ArrayView1<f64>) -> Result<SpherePoint> {
    let nrm = norm2(v);
    if !(nrm > 0.0) || !nrm.is_finite() {
        return Err(Error::DegenerateInput("cannot normalize a zero or non-finite vector".into()));
    }
    Ok(SpherePoint(v.mapv(|e| e / nrm)))
}

/// `g − (xᵀg) x`
pub fn tangent_project(x: &SpherePoint, g: ArrayView1<f64>) -> TangentVector {
    let coef = x.0.dot(&g);
    let mut dir = g.to_owned();
    dir.scaled_add(-coef, &x.0);
    TangentVector { base: x.clone(), dir }
}

/// `f(x) = Σ_j |y_jᵀ x|`
pub fn objective(y: &DataMatrix, x: &SpherePoint) -> Result<f64> {
    check_dims(y, x.dim())?;
    Ok(l1_objective(y, x.coords()))
}

/// `‖Yᵀv‖₁` for an arbitrary vector; used on points off the sphere.
pub fn l1_objective(y: &DataMatrix, v: ArrayView1<f64>) -> f64 {
    y.correlations(v).iter().map(|c| c.abs()).sum()
}

/// `Y s` with `s_j = sign(y_jᵀx)` and `sign(0) = 0`.
pub fn euclid_subgradient(y: &DataMatrix, x: &SpherePoint) -> Result<Array1<f64>> {
    check_dims(y, x.dim())?;
    Ok(euclid_subgradient_at(y, x.coords()))
}

pub(crate) fn euclid_subgradient_at(y: &DataMatrix, v: ArrayView1<f64>) -> Array1<f64> {
    let signs = y.correlations(v).mapv(sign0);
    y.view().dot(&signs)
}

/// `(I − xxᵀ) Y sign(Yᵀx)`
pub fn riemannian_subgradient(y: &DataMatrix, x: &SpherePoint) -> Result<TangentVector> {
    let g = euclid_subgradient(y, x)?;
    Ok(tangent_project(x, g.view()))
}

/// `min(Σ_j ‖y_j‖₂, √n · max_i Σ_k |Y_ik|)`; each term bounds
/// `max_{‖u‖₂=1} ‖Yᵀu‖₁`, the second through `‖u‖₁ ≤ √n ‖u‖₂`.
pub fn lipschitz_bound(y: &DataMatrix) -> LipschitzBound {
    let v = y.view();
    let columns: f64 = v.columns().into_iter().map(norm2).sum();
    let row_max = v.rows().into_iter().map(|row| row.iter().map(|e| e.abs()).sum::<f64>()).fold(0.0_f64, f64::max);
    LipschitzBound(columns.min((y.n() as f64).sqrt() * row_max))
}

/// Eigenvectors of the `q` algebraically smallest eigenvalues of symmetric `A`.
pub fn smallest_eigvecs(a: ArrayView2<f64>, q: usize) -> Result<Array2<f64>> {
    let n = a.nrows();
    if q == 0 || q > n {
        return Err(Error::DegenerateInput(format!("requested {q} eigenvectors of a {n}x{n} matrix")));
    }
    let eig = linalg::symmetric_eigen(a)?;
    Ok(eig.vectors.slice(ndarray::s![.., ..q]).to_owned())
}
