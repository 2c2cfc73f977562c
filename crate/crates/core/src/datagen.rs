//! Seeded synthetic instances for robust subspace recovery and orthogonal
//! dictionary learning.

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_sphere, smallest_eigvecs, DataMatrix, SpherePoint, SubspaceBasis};
use crate::linalg::{norm2, qr_positive};
use crate::rng::{SeededRng, GENERATOR_NAME};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum InstanceMeta {
    Rsr {
        n: usize,
        d: usize,
        p1: usize,
        p2: usize,
        seed: u64,
        generator_name: String,
        columns_normalized: bool,
    },
    Odl {
        n: usize,
        p: usize,
        gamma: f64,
        seed: u64,
        generator_name: String,
        columns_normalized: bool,
    },
}

impl InstanceMeta {
    pub fn model(&self) -> &'static str {
        match self {
            InstanceMeta::Rsr { .. } => "rsr",
            InstanceMeta::Odl { .. } => "odl",
        }
    }

    pub fn n(&self) -> usize {
        match self {
            InstanceMeta::Rsr { n, .. } | InstanceMeta::Odl { n, .. } => *n,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            InstanceMeta::Rsr { seed, .. } | InstanceMeta::Odl { seed, .. } => *seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RsrInstance {
    pub y: DataMatrix,
    /// orthonormal basis of the inlier subspace
    pub s: SubspaceBasis,
    pub meta: InstanceMeta,
}

#[derive(Debug, Clone)]
pub struct OdlInstance {
    pub y: DataMatrix,
    pub xhat: Array2<f64>,
    pub a: Array2<f64>,
    pub meta: InstanceMeta,
}

/// Column-major fill so the draw order does not depend on memory layout.
fn normal_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Array2<f64> {
    let mut m = Array2::<f64>::zeros((rows, cols));
    for j in 0..cols {
        for i in 0..rows {
            m[[i, j]] = rng.normal();
        }
    }
    m
}

fn orthonormal(rng: &mut SeededRng, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let g = normal_matrix(rng, rows, cols);
    Ok(qr_positive(g.view())?.0)
}

/// Inliers `QC` in a random `d`-dimensional subspace followed by `p2` Gaussian
/// outliers; every column scaled to unit norm.
pub fn gen_rsr(n: usize, d: usize, p1: usize, p2: usize, seed: u64) -> Result<RsrInstance> {
    if d == 0 || d >= n || d >= p1 {
        return Err(Error::DegenerateInput(format!(
            "need 1 ≤ d < min(n, p1), got n={n}, d={d}, p1={p1}"
        )));
    }
    let mut rng = SeededRng::new(seed);
    let q = orthonormal(&mut rng, n, d)?;
    let c = normal_matrix(&mut rng, d, p1);
    let o = normal_matrix(&mut rng, n, p2);
    let mut y = concatenate![Axis(1), q.dot(&c), o];
    for mut col in y.columns_mut() {
        let nrm = norm2(col.view());
        if !(nrm > 0.0) {
            return Err(Error::DegenerateInput("generated a zero column".into()));
        }
        col.mapv_inplace(|v| v / nrm);
    }
    Ok(RsrInstance {
        y: DataMatrix::new(y)?,
        s: SubspaceBasis::new(q)?,
        meta: InstanceMeta::Rsr {
            n,
            d,
            p1,
            p2,
            seed,
            generator_name: GENERATOR_NAME.into(),
            columns_normalized: true,
        },
    })
}

/// `Y = X̂Â` with `X̂` random orthogonal and `Â` Bernoulli(γ)-Gaussian; columns
/// are left unnormalized.
pub fn gen_odl(n: usize, p: usize, gamma: f64, seed: u64) -> Result<OdlInstance> {
    if n == 0 || p == 0 {
        return Err(Error::DegenerateInput(format!("need n, p ≥ 1, got n={n}, p={p}")));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::DegenerateInput(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let mut rng = SeededRng::new(seed);
    let xhat = orthonormal(&mut rng, n, n)?;
    let mut a = Array2::<f64>::zeros((n, p));
    for j in 0..p {
        for i in 0..n {
            let keep = rng.uniform() < gamma;
            let z = rng.normal();
            if keep {
                a[[i, j]] = z;
            }
        }
    }
    let y = xhat.dot(&a);
    Ok(OdlInstance {
        y: DataMatrix::new(y)?,
        xhat,
        a,
        meta: InstanceMeta::Odl {
            n,
            p,
            gamma,
            seed,
            generator_name: GENERATOR_NAME.into(),
            columns_normalized: false,
        },
    })
}

/// `⌈10 n^{1.5}⌉`
pub fn odl_sample_count(n: usize) -> usize {
    (10.0 * (n as f64).powf(1.5)).ceil() as usize
}

/// Eigenvector of `YYᵀ` for its smallest eigenvalue.
pub fn spectral_init(y: &DataMatrix) -> Result<SpherePoint> {
    let v = smallest_eigvecs(y.gram().view(), 1)?;
    project_sphere(v.column(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::objective;
    use crate::linalg::frobenius;
    use crate::metrics::principal_angle;

    #[test]
    fn rsr_shapes_and_normalization() {
        let inst = gen_rsr(6, 3, 10, 4, 5).unwrap();
        assert_eq!((inst.y.n(), inst.y.p()), (6, 14));
        for j in 0..14 {
            assert!((norm2(inst.y.column(j)) - 1.0).abs() < 1e-14);
        }
        let s = inst.s.view();
        for j in 0..10 {
            let col = inst.y.column(j);
            let resid = &col - &s.dot(&s.t().dot(&col));
            assert!(norm2(resid.view()) < 1e-13);
        }
    }

    #[test]
    fn rsr_pure_inliers_have_rank_d() {
        let inst = gen_rsr(5, 2, 20, 0, 1).unwrap();
        let eig = crate::linalg::symmetric_eigen(inst.y.gram().view()).unwrap();
        let top = eig.values[4];
        assert!(eig.values[2] < 1e-12 * top);
        assert!(eig.values[3] > 1e-3 * top);
    }

    #[test]
    fn rsr_rejects_bad_dimensions() {
        assert!(gen_rsr(5, 5, 20, 1, 0).is_err());
        assert!(gen_rsr(5, 0, 20, 1, 0).is_err());
        assert!(gen_rsr(5, 3, 3, 1, 0).is_err());
    }

    #[test]
    fn odl_structure() {
        let inst = gen_odl(8, 200, 0.2, 3).unwrap();
        let x = inst.xhat.view();
        assert!(frobenius((x.t().dot(&x) - Array2::<f64>::eye(8)).view()) < 1e-12);
        assert_eq!(inst.y.view(), x.dot(&inst.a));
        let nnz = inst.a.iter().filter(|v| **v != 0.0).count() as f64;
        let total = 1600.0_f64;
        let se = (0.2 * 0.8 / total).sqrt();
        assert!((nnz / total - 0.2).abs() < 3.0 * se);
        assert!(gen_odl(8, 10, 1.0, 0).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = gen_rsr(7, 3, 12, 9, 42).unwrap();
        let b = gen_rsr(7, 3, 12, 9, 42).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.s.view(), b.s.view());
        let c = gen_odl(5, 30, 0.3, 9).unwrap();
        let d = gen_odl(5, 30, 0.3, 9).unwrap();
        assert_eq!(c.y, d.y);
    }

    #[test]
    fn spectral_init_examples() {
        let y = DataMatrix::new(ndarray::array![[1.0], [0.0]]).unwrap();
        let x = spectral_init(&y).unwrap();
        assert!((x.coords()[1].abs() - 1.0).abs() < 1e-14);
        let inst = gen_rsr(4, 3, 20, 0, 2).unwrap();
        let x = spectral_init(&inst.y).unwrap();
        assert!(principal_angle(&x, &inst.s) < 1e-7);
        let f = objective(&inst.y, &x).unwrap();
        assert!(f < 1e-6);
    }

    #[test]
    fn odl_sample_rule() {
        assert_eq!(odl_sample_count(10), 317);
        assert_eq!(odl_sample_count(30), 1644);
    }
}
