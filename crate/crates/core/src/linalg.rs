//! Small dense linear-algebra kernels: Cholesky factorization, triangular
//! solves, sample covariance and a cyclic Jacobi symmetric eigensolver.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = a`.
///
/// Fails with a numerical error when `a` is not symmetric positive definite.
pub fn cholesky(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::usage(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for p in 0..j {
            diag -= l[[j, p]] * l[[j, p]];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite (pivot {j} = {diag:e}, condition estimate {:e})",
                condition_estimate(a)
            )));
        }
        let djj = diag.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for p in 0..j {
                s -= l[[i, p]] * l[[j, p]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(l)
}

/// Crude condition estimate: ratio of largest to smallest diagonal entry.
pub fn condition_estimate(a: ArrayView2<f64>) -> f64 {
    let diag = a.diag();
    let max = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `L·y = b` for lower-triangular `L`.
pub fn solve_lower(l: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[[i, j]] * y[j];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Solves `Lᵀ·x = y` for lower-triangular `L`.
pub fn solve_upper_transposed(l: ArrayView2<f64>, y: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for j in (i + 1)..n {
            s -= l[[j, i]] * x[j];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Column means and sample covariance (divisor `n − 1`) of the rows of `x`.
pub fn mean_and_covariance(x: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::usage(format!(
            "covariance needs at least 2 samples, got {n}"
        )));
    }
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    Ok((mean, symmetrize(cov)))
}

fn symmetrize(mut a: Array2<f64>) -> Array2<f64> {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    a
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues sorted descending and the matching unit eigenvectors
/// as columns. Each eigenvector's sign is fixed so that its largest-magnitude
/// entry is positive.
pub fn symmetric_eigen(a: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::usage("symmetric_eigen needs a square matrix"));
    }
    let mut m = symmetrize(a.to_owned());
    let mut v = Array2::<f64>::eye(n);
    let scale = m
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
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
                let t = if theta == 0.0 { 1.0 } else { t };
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

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).to_owned();
        let pivot = col
            .iter()
            .cloned()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            col.mapv_inplace(|x| -x);
        }
        vectors.column_mut(dst).assign(&col);
    }
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_reproduces_matrix() {
        let a = array![[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let l = cholesky(a.view()).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(cholesky(a.view()), Err(Error::Numerical(_))));
    }

    #[test]
    fn triangular_solves_invert_factor() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky(a.view()).unwrap();
        let b = array![1.0, -2.0];
        let y = solve_lower(l.view(), b.view());
        let x = solve_upper_transposed(l.view(), y.view());
        let ax = a.dot(&x);
        assert!((ax[0] - 1.0).abs() < 1e-12 && (ax[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn covariance_uses_unbiased_divisor() {
        let x = array![[0.0, 0.0], [2.0, 2.0]];
        let (mean, cov) = mean_and_covariance(x.view()).unwrap();
        assert_eq!(mean, array![1.0, 1.0]);
        assert_eq!(cov, array![[2.0, 2.0], [2.0, 2.0]]);
    }

    #[test]
    fn eigen_of_diagonal_is_sorted() {
        let a = array![[1.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 2.0]];
        let (vals, vecs) = symmetric_eigen(a.view()).unwrap();
        assert_eq!(vals, array![3.0, 2.0, 1.0]);
        assert_eq!(vecs.column(0), array![0.0, 1.0, 0.0]);
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let a = array![[2.0, 1.0, 0.5], [1.0, 3.0, -0.2], [0.5, -0.2, 1.5]];
        let (vals, vecs) = symmetric_eigen(a.view()).unwrap();
        let back = vecs.dot(&Array2::from_diag(&vals)).dot(&vecs.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
