//! Dense kernels for the small symmetric systems that show up in the solvers:
//! Cholesky factorization, cyclic Jacobi eigen-decomposition and thin
//! Householder QR. Matrices here are at most a few hundred rows, so the
//! routines favour accuracy and determinism over blocking.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Frobenius norm.
pub fn frobenius(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn norm2(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "cholesky needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= l[[j, k]] * l[[j, k]];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
            }
            let ljj = diag.sqrt();
            l[[j, j]] = ljj;
            for i in (j + 1)..n {
                let mut acc = a[[i, j]];
                for k in 0..j {
                    acc -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = acc / ljj;
            }
        }
        Ok(Self { lower: l })
    }

    /// Factor `A`, retrying once with `shift` added to the diagonal.
    pub fn factor_regularized(a: ArrayView2<f64>, shift: f64) -> Result<Self> {
        match Self::factor(a) {
            Ok(c) => Ok(c),
            Err(Error::NotPositiveDefinite { .. }) => {
                let mut shifted = a.to_owned();
                shifted.diag_mut().mapv_inplace(|v| v + shift);
                Self::factor(shifted.view())
            }
            Err(e) => Err(e),
        }
    }

    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let l = &self.lower;
        let n = l.nrows();
        let mut y = b.to_owned();
        for i in 0..n {
            let mut acc = y[i];
            for k in 0..i {
                acc -= l[[i, k]] * y[k];
            }
            y[i] = acc / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for k in (i + 1)..n {
                acc -= l[[k, i]] * y[k];
            }
            y[i] = acc / l[[i, i]];
        }
        y
    }
}

/// Eigenvalues in ascending order with the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
///
/// Only symmetry up to `1e-10 * ‖A‖_F` is accepted; the strictly upper part
/// is ignored after the check.
pub fn symmetric_eigen(a: ArrayView2<f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(Error::DimensionMismatch(format!(
            "eigen-decomposition needs a non-empty square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let scale = frobenius(a);
    let asym = frobenius((&a - &a.t()).view());
    if asym > 1e-10 * scale {
        return Err(Error::DegenerateInput(format!(
            "matrix is not symmetric (‖A−Aᵀ‖_F = {asym:e})"
        )));
    }

    let mut m = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    let mut v = Array2::<f64>::eye(n);
    let target = f64::EPSILON * scale.max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                m[[p, q]] = 0.0;
                m[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[i, i]].total_cmp(&m[[j, j]]));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    Ok(SymmetricEigen { values, vectors })
}

/// Thin QR `A = Q R` of an `n×m` matrix (`n ≥ m`) with `diag(R) ≥ 0`.
pub fn qr_positive(a: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n, m) = a.dim();
    if m > n {
        return Err(Error::DimensionMismatch(format!(
            "thin QR needs rows ≥ cols, got {n}x{m}"
        )));
    }
    let mut r = a.to_owned();
    let mut reflectors: Vec<Array1<f64>> = Vec::with_capacity(m);
    for k in 0..m {
        let x = r.slice(s![k.., k]).to_owned();
        let alpha = norm2(x.view());
        let mut v = x;
        if alpha > 0.0 {
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign * alpha;
            let vn = norm2(v.view());
            v.mapv_inplace(|e| e / vn);
            let mut block = r.slice_mut(s![k.., k..]);
            let proj = v.dot(&block);
            for (i, vi) in v.iter().enumerate() {
                let mut row = block.row_mut(i);
                row.scaled_add(-2.0 * vi, &proj);
            }
        } else {
            v.fill(0.0);
        }
        reflectors.push(v);
    }

    let mut q = Array2::<f64>::zeros((n, m));
    for j in 0..m {
        q[[j, j]] = 1.0;
    }
    for k in (0..m).rev() {
        let v = &reflectors[k];
        let mut block = q.slice_mut(s![k.., ..]);
        let proj = v.dot(&block);
        for (i, vi) in v.iter().enumerate() {
            let mut row = block.row_mut(i);
            row.scaled_add(-2.0 * vi, &proj);
        }
    }

    let mut rr = r.slice(s![..m, ..]).to_owned();
    for i in 0..m {
        for j in 0..i {
            rr[[i, j]] = 0.0;
        }
        if rr[[i, i]] < 0.0 {
            rr.row_mut(i).mapv_inplace(|e| -e);
            q.column_mut(i).mapv_inplace(|e| -e);
        }
    }
    Ok((q, rr))
}

/// Least-squares solution of `min ‖A c − b‖₂` through thin QR.
pub fn lstsq(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let (n, m) = a.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "lstsq: rhs has length {}, matrix has {} rows",
            b.len(),
            n
        )));
    }
    let (q, r) = qr_positive(a)?;
    let rhs = q.t().dot(&b);
    let rmax = r.diag().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let mut c = Array1::<f64>::zeros(m);
    for i in (0..m).rev() {
        let rii = r[[i, i]];
        if rii.abs() <= 1e-13 * rmax.max(f64::MIN_POSITIVE) {
            return Err(Error::DegenerateInput(
                "least-squares design matrix is rank deficient".into(),
            ));
        }
        let mut acc = rhs[i];
        for j in (i + 1)..m {
            acc -= r[[i, j]] * c[j];
        }
        c[i] = acc / rii;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let b = array![1.0, -2.0, 0.5];
        let chol = Cholesky::factor(a.view()).unwrap();
        let x = chol.solve(b.view());
        let r = a.dot(&x) - &b;
        assert!(norm2(r.view()) < 1e-14);
        let l = chol.lower();
        assert_abs_diff_eq!(frobenius((l.dot(&l.t()) - &a).view()), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            Cholesky::factor(a.view()),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
        // a single tiny shift cannot rescue a genuinely indefinite matrix
        assert!(Cholesky::factor_regularized(a.view(), 1e-12).is_err());
    }

    #[test]
    fn cholesky_regularization_rescues_singular_psd() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(Cholesky::factor(a.view()).is_err());
        assert!(Cholesky::factor_regularized(a.view(), 1e-12).is_ok());
    }

    #[test]
    fn jacobi_diagonal_and_ordering() {
        let a = array![[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        let eig = symmetric_eigen(a.view()).unwrap();
        assert_eq!(eig.values.to_vec(), vec![1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(eig.vectors[[1, 0]].abs(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn jacobi_rejects_nonsymmetric() {
        let a = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(symmetric_eigen(a.view()), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn jacobi_residuals_on_dense_matrix() {
        let b = array![
            [1.0, 0.3, -0.7, 2.0],
            [0.1, -1.2, 0.4, 0.0],
            [0.5, 0.5, 0.9, -0.3],
            [2.2, -0.4, 0.0, 1.1]
        ];
        let a = b.dot(&b.t());
        let eig = symmetric_eigen(a.view()).unwrap();
        let scale = frobenius(a.view());
        for k in 0..4 {
            let v = eig.vectors.column(k);
            let r = a.dot(&v) - &(&v * eig.values[k]);
            assert!(norm2(r.view()) <= 1e-12 * scale);
        }
        let gram = eig.vectors.t().dot(&eig.vectors);
        assert!(frobenius((gram - Array2::<f64>::eye(4)).view()) < 1e-13);
    }

    #[test]
    fn qr_reconstructs_with_positive_diagonal() {
        let a = array![[1.0, -2.0], [3.0, 0.5], [-1.0, 4.0], [0.0, 1.0]];
        let (q, r) = qr_positive(a.view()).unwrap();
        assert!(frobenius((q.dot(&r) - &a).view()) < 1e-13);
        assert!(frobenius((q.t().dot(&q) - Array2::<f64>::eye(2)).view()) < 1e-14);
        assert!(r[[0, 0]] > 0.0 && r[[1, 1]] > 0.0);
        assert_eq!(r[[1, 0]], 0.0);
    }

    #[test]
    fn lstsq_recovers_exact_quadratic() {
        let xs = [60.0_f64, 70.0, 80.0, 90.0, 100.0];
        let a = Array2::from_shape_fn((5, 3), |(i, j)| xs[i].powi(2 - j as i32));
        let b = Array1::from_iter(xs.iter().map(|x| 0.02 * x * x - 1.5 * x + 7.0));
        let c = lstsq(a.view(), b.view()).unwrap();
        assert_abs_diff_eq!(c[0], 0.02, epsilon = 1e-12);
        assert_abs_diff_eq!(c[1], -1.5, epsilon = 1e-10);
        assert_abs_diff_eq!(c[2], 7.0, epsilon = 1e-8);
    }
}
