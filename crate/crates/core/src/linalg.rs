//! Small dense symmetric linear algebra: cyclic Jacobi eigendecomposition and
//! Cholesky solves. Deterministic, no external BLAS/LAPACK.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns (eigenvalues, eigenvectors) sorted by descending eigenvalue;
/// eigenvectors are the columns of the returned matrix.
pub fn sym_eig(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.dim().0;
    if a.dim().1 != n {
        return Err(Error::shape("square matrix", format!("{:?}", a.dim())));
    }
    let mut m = a.clone();
    let mut v = Array2::eye(n);
    let off = |m: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[[i, j]] * m[[i, j]];
                }
            }
        }
        s
    };
    let frob: f64 = a.iter().map(|x| x * x).sum();
    let tol = 1e-24 * frob.max(1e-300);
    for _sweep in 0..100 {
        if off(&m) <= tol {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
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
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let vals = Array1::from_iter(idx.iter().map(|&i| m[[i, i]]));
    let mut vecs = Array2::zeros((n, n));
    for (col, &i) in idx.iter().enumerate() {
        vecs.column_mut(col).assign(&v.column(i));
    }
    Ok((vals, vecs))
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.dim().0;
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "matrix not positive definite at pivot {i} ({s})"
                    )));
                }
                l[[i, j]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solve A X = B given the Cholesky factor of A, for matrix right-hand sides.
pub fn cholesky_solve(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let n = l.dim().0;
    let cols = b.dim().1;
    let mut x = b.clone();
    // Forward substitution L y = b.
    for c in 0..cols {
        for i in 0..n {
            let mut s = x[[i, c]];
            for k in 0..i {
                s -= l[[i, k]] * x[[k, c]];
            }
            x[[i, c]] = s / l[[i, i]];
        }
        // Back substitution L^T x = y.
        for i in (0..n).rev() {
            let mut s = x[[i, c]];
            for k in i + 1..n {
                s -= l[[k, i]] * x[[k, c]];
            }
            x[[i, c]] = s / l[[i, i]];
        }
    }
    x
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration with a deterministic start.
pub fn top_eigenvalue(a: &Array2<f64>, iters: usize) -> f64 {
    let n = a.dim().0;
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + (i as f64) * 1e-3);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = a.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm < 1e-300 {
            return 0.0;
        }
        v = w / norm;
        lambda = v.dot(&a.dot(&v));
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eig_recovers_diagonal() {
        let a = array![[3.0, 0.0], [0.0, 1.0]];
        let (vals, vecs) = sym_eig(&a).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        assert!(vecs.column(0)[0].abs() > 0.999);
    }

    #[test]
    fn eig_reconstructs_matrix() {
        let a = array![
            [4.0, 1.0, -0.5],
            [1.0, 3.0, 0.2],
            [-0.5, 0.2, 1.0]
        ];
        let (vals, vecs) = sym_eig(&a).unwrap();
        let lam = Array2::from_diag(&vals);
        let rec = vecs.dot(&lam).dot(&vecs.t());
        for (x, y) in a.iter().zip(rec.iter()) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
        // Eigenvalues descending.
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
    }

    #[test]
    fn cholesky_solve_round_trips() {
        let a = array![[4.0, 1.0], [1.0, 3.0]];
        let l = cholesky(&a).unwrap();
        let b = array![[1.0, 0.0], [0.0, 1.0]];
        let x = cholesky_solve(&l, &b);
        let ident = a.dot(&x);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ident[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn power_iteration_finds_top_eigenvalue() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let top = top_eigenvalue(&a, 100);
        assert!((top - 3.0).abs() < 1e-9, "{top}");
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(&a).is_err());
    }
}
