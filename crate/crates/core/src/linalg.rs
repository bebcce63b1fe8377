//! Small dense linear-algebra kernels shared by PCA and the Gaussian mixture
//! code: a cyclic Jacobi eigensolver for symmetric matrices and a Cholesky
//! factorization with triangular solves.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// the rows of the second array.
pub fn symmetric_eigen<F: Scalar>(matrix: &Array2<F>) -> Result<(Array1<F>, Array2<F>)> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::invalid_input("eigendecomposition needs a square matrix"));
    }
    let mut a = matrix.clone();
    // Accumulated rotations; columns are eigenvectors.
    let mut v = Array2::<F>::eye(n);

    let max_sweeps = 64;
    let eps = F::cast(1e-30);
    for _ in 0..max_sweeps {
        let mut off = F::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        let scale: F = (0..n).map(|i| a[[i, i]] * a[[i, i]]).sum::<F>() + off;
        if off <= eps * scale.max(F::cast(1e-300)) || off == F::zero() {
            return Ok(sort_eigenpairs(a, v));
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == F::zero() {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let theta = (aqq - app) / (F::cast(2.0) * apq);
                // Stable tan of the rotation angle.
                let t = {
                    let sign = if theta >= F::zero() { F::one() } else { -F::one() };
                    sign / (theta.abs() + (theta * theta + F::one()).sqrt())
                };
                let c = F::one() / (t * t + F::one()).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
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
    Err(Error::numerical("Jacobi eigensolver did not converge"))
}

fn sort_eigenpairs<F: Scalar>(a: Array2<F>, v: Array2<F>) -> (Array1<F>, Array2<F>) {
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[[j, j]].partial_cmp(&a[[i, i]]).expect("finite eigenvalues")
    });
    let mut values = Array1::<F>::zeros(n);
    let mut vectors = Array2::<F>::zeros((n, n));
    for (rank, &idx) in order.iter().enumerate() {
        values[rank] = a[[idx, idx]];
        for k in 0..n {
            vectors[[rank, k]] = v[[k, idx]];
        }
    }
    (values, vectors)
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky<F: Scalar>(matrix: &Array2<F>) -> Result<Array2<F>> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::invalid_input("Cholesky needs a square matrix"));
    }
    let mut l = Array2::<F>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut sum = matrix[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if sum <= F::zero() || !sum.is_finite() {
                    return Err(Error::numerical(
                        "matrix is not positive definite (Cholesky pivot <= 0)",
                    ));
                }
                l[[i, j]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves L y = b for lower-triangular L by forward substitution.
pub fn forward_substitute<F: Scalar>(l: &Array2<F>, b: &Array1<F>) -> Array1<F> {
    let n = l.nrows();
    let mut y = Array1::<F>::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * y[k];
        }
        y[i] = sum / l[[i, i]];
    }
    y
}

/// `ln det` of a matrix given its Cholesky factor.
pub fn log_det_from_cholesky<F: Scalar>(l: &Array2<F>) -> F {
    let two = F::cast(2.0);
    (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<F>() * two
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_of_diagonal_matrix() {
        let m: Array2<f64> = array![[3.0, 0.0], [0.0, 1.0]];
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        assert!(vecs[[0, 0]].abs() - 1.0 < 1e-12);
    }

    #[test]
    fn eigen_reconstructs_symmetric_matrix() {
        let m: Array2<f64> = array![
            [4.0, 1.0, 0.5],
            [1.0, 3.0, 0.25],
            [0.5, 0.25, 2.0]
        ];
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        // m == V^T diag(vals) V with eigenvectors as rows of V.
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += vecs[[k, i]] * vals[k] * vecs[[k, j]];
                }
                assert!((s - m[[i, j]]).abs() < 1e-10, "entry ({i},{j})");
            }
        }
        // Descending order.
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
    }

    #[test]
    fn cholesky_round_trip() {
        let m: Array2<f64> = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky(&m).unwrap();
        let rebuilt = l.dot(&l.t());
        for i in 0..2 {
            for j in 0..2 {
                assert!((rebuilt[[i, j]] - m[[i, j]]).abs() < 1e-12);
            }
        }
        let b = array![1.0, 2.0];
        let y = forward_substitute(&l, &b);
        // L y == b
        assert!((l.dot(&y)[0] - 1.0f64).abs() < 1e-12);
        assert!((l.dot(&y)[1] - 2.0f64).abs() < 1e-12);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m: Array2<f64> = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(&m).is_err());
    }
}
