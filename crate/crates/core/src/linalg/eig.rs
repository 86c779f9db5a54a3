use crate::linalg::{DenseMatrix, LinalgError};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 50;

/// Eigendecomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct SymEig<T> {
    /// Eigenvalues in descending order.
    pub values: Vec<T>,
    /// Matrix whose column `i` is the eigenvector for `values[i]`.
    pub vectors: DenseMatrix<T>,
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Requires a square matrix that is symmetric up to a small relative
/// tolerance; the tiny asymmetry allowed by the tolerance is removed by
/// averaging before iterating. Eigenvalues come back in descending order
/// with orthonormal eigenvector columns.
pub fn sym_eig_desc<T: Scalar>(a: &DenseMatrix<T>) -> Result<SymEig<T>, LinalgError> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(LinalgError::NotSquare { rows, cols });
    }
    if let Some((row, col)) = a.first_non_finite() {
        return Err(LinalgError::NonFinite { row, col });
    }
    let n = rows;
    let scale = if a.max_abs() > T::one() {
        a.max_abs()
    } else {
        T::one()
    };
    let mut delta = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = (a[(i, j)] - a[(j, i)]).abs();
            if d > delta {
                delta = d;
            }
        }
    }
    if delta > T::SYM_TOL * scale {
        return Err(LinalgError::NotSymmetric {
            delta: delta.as_f64(),
        });
    }

    let mut w = DenseMatrix::from_fn(n, n, |i, j| (a[(i, j)] + a[(j, i)]) / T::cast(2.0));
    let mut v = DenseMatrix::identity(n);
    // Each sweep leaves O(n ε) rounding in the off-diagonal mass, so the
    // convergence target must sit above that floor or unlucky inputs never
    // reach it.
    let tol = T::epsilon() * T::cast((n + 4) as f64) * w.frob_norm();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diag_norm(&w) <= tol {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = w[(p, q)];
                if apq.abs() <= T::min_positive_value() {
                    continue;
                }
                let theta = (w[(q, q)] - w[(p, p)]) / (T::cast(2.0) * apq);
                let t = small_root(theta);
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                rotate_columns(&mut w, p, q, c, s);
                rotate_rows(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
    }
    if !converged && off_diag_norm(&w) > tol {
        return Err(LinalgError::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        w[(j, j)]
            .partial_cmp(&w[(i, i)])
            .expect("finite eigenvalues")
    });
    let values: Vec<T> = order.iter().map(|&i| w[(i, i)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymEig { values, vectors })
}

/// Smaller-magnitude root of `t² + 2θt − 1 = 0`, the Jacobi tangent.
fn small_root<T: Scalar>(theta: T) -> T {
    let sign = if theta < T::zero() {
        -T::one()
    } else {
        T::one()
    };
    if theta.abs() > T::cast(1e15) {
        // θ² + 1 would lose the 1 entirely; the root degenerates to 1/(2θ).
        sign / (T::cast(2.0) * theta.abs())
    } else {
        sign / (theta.abs() + (theta * theta + T::one()).sqrt())
    }
}

fn off_diag_norm<T: Scalar>(a: &DenseMatrix<T>) -> T {
    let n = a.rows();
    let mut acc = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += a[(i, j)] * a[(i, j)];
            }
        }
    }
    acc.sqrt()
}

fn rotate_columns<T: Scalar>(m: &mut DenseMatrix<T>, p: usize, q: usize, c: T, s: T) {
    for k in 0..m.rows() {
        let kp = m[(k, p)];
        let kq = m[(k, q)];
        m[(k, p)] = c * kp - s * kq;
        m[(k, q)] = s * kp + c * kq;
    }
}

fn rotate_rows<T: Scalar>(m: &mut DenseMatrix<T>, p: usize, q: usize, c: T, s: T) {
    for k in 0..m.cols() {
        let pk = m[(p, k)];
        let qk = m[(q, k)];
        m[(p, k)] = c * pk - s * qk;
        m[(q, k)] = s * pk + c * qk;
    }
}
