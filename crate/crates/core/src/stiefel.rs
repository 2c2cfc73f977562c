//! Column-by-column ManPPA for `min ‖YᵀX‖₁` over `n×q` matrices with
//! orthonormal columns.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_sphere, smallest_eigvecs, DataMatrix, SpherePoint};
use crate::linalg::{frobenius, qr_positive};
use crate::manppa::{manppa_solve, manppa_solve_constrained, ManppaConfig};
use crate::metrics::orthonormality_error;
use crate::rng::SeededRng;
use crate::trace::{IterateTrace, MetricHook};

/// Feasibility tolerance of [`StiefelPoint::new`].
pub const STIEFEL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StiefelPoint(Array2<f64>);

impl StiefelPoint {
    pub fn new(x: Array2<f64>) -> Result<Self> {
        if x.ncols() > x.nrows() {
            return Err(Error::DimensionMismatch(format!("{}x{} cannot have orthonormal columns", x.nrows(), x.ncols())));
        }
        let err = orthonormality_error(x.view());
        if !(err <= STIEFEL_TOL) {
            return Err(Error::DegenerateInput(format!("columns are not orthonormal: ‖XᵀX − I‖_F = {err:e}")));
        }
        Ok(Self(x))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn q(&self) -> usize {
        self.0.ncols()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// How each new column is started.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitPolicy {
    #[default]
    Spectral,
    /// Gaussian vector projected onto the complement.
    Random { seed: u64 },
}

#[derive(Debug, Clone)]
pub struct SequentialOutput {
    pub x: StiefelPoint,
    /// Columns as returned by the per-column solves, before the QR pass.
    pub raw: Array2<f64>,
    pub traces: Vec<IterateTrace>,
}

impl SequentialOutput {
    pub fn any_failed(&self) -> bool {
        self.traces.iter().any(|t| t.status.is_failure())
    }
}

fn complement_projector(n: usize, q: ArrayView2<f64>) -> Array2<f64> {
    Array2::<f64>::eye(n) - q.dot(&q.t())
}

/// Smallest eigenvector of `P YYᵀ P` inside `range(P)`, `P = I − QQᵀ`.
pub fn complement_init(y: &DataMatrix, q: ArrayView2<f64>) -> Result<SpherePoint> {
    let n = y.n();
    let l = q.ncols();
    if q.nrows() != n {
        return Err(Error::DimensionMismatch(format!("Q has {} rows, data has {n}", q.nrows())));
    }
    if l >= n {
        return Err(Error::DegenerateInput(format!("complement of {l} columns in dimension {n} is empty")));
    }
    let p = complement_projector(n, q);
    let m = y.gram();
    let mut a = p.dot(&m).dot(&p);
    // lift range(Q) above the spectrum of PMP so it never wins
    let lift = frobenius(m.view()) + 1.0;
    a = a + q.dot(&q.t()) * lift;
    a = (&a + &a.t()) * 0.5;
    let v = smallest_eigvecs(a.view(), 1)?;
    project_sphere(p.dot(&v.column(0)).view())
}

fn random_init(n: usize, q: ArrayView2<f64>, rng: &mut SeededRng) -> Result<SpherePoint> {
    let g = Array1::from_iter((0..n).map(|_| rng.normal()));
    let coef = q.t().dot(&g);
    project_sphere((&g - &q.dot(&coef)).view())
}

/// Solves column `ℓ+1` over the sphere restricted to the complement of the first
/// `ℓ` columns, then re-orthonormalizes by QR with a positive diagonal.
pub fn sequential_manppa(
    y: &DataMatrix,
    q: usize,
    config: &ManppaConfig,
    init: InitPolicy,
    metric: Option<MetricHook<'_>>,
) -> Result<SequentialOutput> {
    let n = y.n();
    if q == 0 || q > n {
        return Err(Error::DegenerateInput(format!("need 1 ≤ q ≤ n, got q={q}, n={n}")));
    }
    config.validate()?;
    let mut rng = match init {
        InitPolicy::Random { seed } => Some(SeededRng::new(seed)),
        InitPolicy::Spectral => None,
    };
    let mut cols = Array2::<f64>::zeros((n, 0));
    let mut traces = Vec::with_capacity(q);
    for l in 0..q {
        let x0 = match rng.as_mut() {
            Some(r) => random_init(n, cols.view(), r)?,
            None => complement_init(y, cols.view())?,
        };
        let out = if l == 0 {
            manppa_solve(y, &x0, config, metric)?
        } else {
            manppa_solve_constrained(y, &x0, cols.view(), config, metric)?
        };
        log::debug!("column {} finished with status {}", l + 1, out.trace.status.as_str());
        traces.push(out.trace);
        cols.push_column(out.x.coords())
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
    }
    let (qf, _) = qr_positive(cols.view())?;
    // QR fixes signs through R; restore each column's own orientation
    let mut x = qf;
    for (mut c, raw) in x.axis_iter_mut(Axis(1)).zip(cols.axis_iter(Axis(1))) {
        if c.dot(&raw) < 0.0 {
            c.mapv_inplace(|v| -v);
        }
    }
    Ok(SequentialOutput { x: StiefelPoint::new(x)?, raw: cols, traces })
}

/// `‖YᵀX‖₁` summed over all entries.
pub fn matrix_objective(y: &DataMatrix, x: ArrayView2<f64>) -> f64 {
    y.view().t().dot(&x).iter().map(|v| v.abs()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::l1_objective;
    use ndarray::array;

    fn small() -> DataMatrix {
        DataMatrix::new(array![
            [0.9, -0.3, 0.4, 1.2, -0.5, 0.05, 0.3, 0.2],
            [0.1, 0.8, -1.1, 0.3, 0.2, -0.7, 0.2, -0.4],
            [-0.6, 0.5, 0.7, -0.2, 1.0, 0.4, -0.9, 0.1],
            [0.3, 0.2, 0.1, -0.8, 0.6, 0.9, 0.5, -1.0]
        ])
        .unwrap()
    }

    #[test]
    fn complement_init_diagonal_case() {
        let y = DataMatrix::new(array![[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let q = array![[0.0], [0.0], [1.0]];
        let x = complement_init(&y, q.view()).unwrap();
        assert!(x.coords()[2].abs() < 1e-12);
        assert!((x.coords()[1].abs() - 1.0).abs() < 1e-12);
        let empty = Array2::<f64>::zeros((3, 0));
        let x = complement_init(&y, empty.view()).unwrap();
        assert!((x.coords()[2].abs() - 1.0).abs() < 1e-12);
        let full = Array2::<f64>::eye(3);
        assert!(complement_init(&y, full.view()).is_err());
    }

    #[test]
    fn single_column_matches_vector_solver() {
        let y = small();
        let cfg = ManppaConfig::default();
        let out = sequential_manppa(&y, 1, &cfg, InitPolicy::Spectral, None).unwrap();
        let x0 = crate::datagen::spectral_init(&y).unwrap();
        let direct = manppa_solve(&y, &x0, &cfg, None).unwrap();
        assert_eq!(out.raw.column(0), direct.x.coords());
        let csv = |t: &IterateTrace| t.to_csv(crate::trace::CsvOptions::default());
        assert_eq!(csv(&out.traces[0]), csv(&direct.trace));
    }

    #[test]
    fn full_basis_is_feasible_and_separable() {
        let y = small();
        let out = sequential_manppa(&y, 4, &ManppaConfig::default(), InitPolicy::Random { seed: 3 }, None).unwrap();
        assert!(orthonormality_error(out.x.view()) <= 1e-12);
        for l in 1..4 {
            let prev = out.raw.slice(ndarray::s![.., ..l]);
            let overlap = prev.t().dot(&out.raw.column(l));
            assert!(overlap.iter().all(|v| v.abs() <= 1e-8));
        }
        let total: f64 = (0..4).map(|l| l1_objective(&y, out.raw.column(l))).sum();
        assert!((matrix_objective(&y, out.raw.view()) - total).abs() < 1e-12);
    }

    #[test]
    fn rejects_too_many_columns() {
        assert!(sequential_manppa(&small(), 5, &ManppaConfig::default(), InitPolicy::Spectral, None).is_err());
        assert!(StiefelPoint::new(array![[1.0, 1.0], [0.0, 0.0]]).is_err());
    }
}
