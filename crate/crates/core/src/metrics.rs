//! Recovery metrics against ground truth.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::geometry::{SpherePoint, SubspaceBasis};
use crate::linalg::{frobenius, norm2, symmetric_eigen};

/// Angle between `x` and `S^⊥`, i.e. `arcsin ‖Sᵀx‖₂` where `S` is the inlier basis.
pub fn principal_angle(x: &SpherePoint, inliers: &SubspaceBasis) -> f64 {
    let proj = inliers.view().t().dot(&x.coords());
    norm2(proj.view()).clamp(-1.0, 1.0).asin()
}

/// Angle between unit vectors `x` and `±v`, computed as `atan2(‖x − cv‖, |c|)` with
/// `c = vᵀx`, which keeps full precision near zero.
fn unsigned_angle(x: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    let c = v.dot(&x);
    let mut r = x.to_owned();
    r.scaled_add(-c, &v);
    norm2(r.view()).atan2(c.abs())
}

/// Smallest angle between `x` and a signed column of the orthogonal matrix `dict`,
/// with the attaining column index. Ties resolve to the smallest index.
pub fn angle_to_dictionary(x: &SpherePoint, dict: ArrayView2<f64>) -> (f64, usize) {
    let corr = dict.t().dot(&x.coords());
    let mut best = 0usize;
    for (j, c) in corr.iter().enumerate() {
        if c.abs() > corr[best].abs() {
            best = j;
        }
    }
    (unsigned_angle(x.coords(), dict.column(best)), best)
}

/// `‖X Xᵀ − P_{S^⊥}‖_F`
pub fn subspace_distance(x: ArrayView2<f64>, inliers: &SubspaceBasis) -> f64 {
    let target = inliers.complement_projector();
    frobenius((x.dot(&x.t()) - target).view())
}

/// Largest principal angle between `span(X)` and `S^⊥`: `arcsin σ_max(SᵀX)`.
pub fn largest_principal_angle(x: ArrayView2<f64>, inliers: &SubspaceBasis) -> f64 {
    let m = inliers.view().t().dot(&x);
    let gram = m.t().dot(&m);
    let top = match symmetric_eigen(gram.view()) {
        Ok(eig) => eig.values[eig.values.len() - 1].max(0.0),
        Err(_) => return f64::NAN,
    };
    top.sqrt().clamp(0.0, 1.0).asin()
}

/// Match of each column of `X` to the dictionary.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryMatch {
    pub max_angle: f64,
    pub assignment: Vec<usize>,
    /// Every dictionary column is used at most once.
    pub is_permutation: bool,
}

pub fn match_dictionary(x: ArrayView2<f64>, dict: ArrayView2<f64>) -> DictionaryMatch {
    let mut max_angle = 0.0_f64;
    let mut assignment = Vec::with_capacity(x.ncols());
    for col in x.columns() {
        let nrm = norm2(col);
        let unit = SpherePoint::new(col.mapv(|v| v / nrm)).unwrap_or_else(|_| SpherePoint::basis(col.len(), 0));
        let (angle, idx) = angle_to_dictionary(&unit, dict);
        max_angle = max_angle.max(angle);
        assignment.push(idx);
    }
    let mut seen = vec![false; dict.ncols()];
    let is_permutation = assignment.iter().all(|&j| !std::mem::replace(&mut seen[j], true));
    DictionaryMatch { max_angle, assignment, is_permutation }
}

/// Stiefel feasibility `‖XᵀX − I‖_F`.
pub fn orthonormality_error(x: ArrayView2<f64>) -> f64 {
    let q = x.ncols();
    frobenius((x.t().dot(&x) - Array2::<f64>::eye(q)).view())
}
