use crate::linalg::{DenseMatrix, LinalgError};
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 60;

/// Compact singular value decomposition `M = left · diag(singulars) · rightᵀ`.
///
/// For an r×c input, `left` is r×k and `right` is c×k with `k = min(r, c)`;
/// both have orthonormal columns and the singular values are descending.
#[derive(Debug, Clone)]
pub struct CompactSvd<T> {
    pub left: DenseMatrix<T>,
    pub singulars: Vec<T>,
    pub right: DenseMatrix<T>,
}

/// Compact SVD by one-sided Jacobi (Hestenes) rotations.
///
/// Rank-deficient and zero inputs are handled by completing the left factor
/// to an orthonormal basis, so the factor invariants hold for every input.
pub fn compact_svd<T: Scalar>(m: &DenseMatrix<T>) -> Result<CompactSvd<T>, LinalgError> {
    if let Some((row, col)) = m.first_non_finite() {
        return Err(LinalgError::NonFinite { row, col });
    }
    if m.rows() < m.cols() {
        // One-sided Jacobi wants the tall orientation; transposing swaps the factors.
        let svd = compact_svd(&m.transpose())?;
        return Ok(CompactSvd {
            left: svd.right,
            singulars: svd.singulars,
            right: svd.left,
        });
    }

    let (d, n) = m.shape();
    let mut b = m.clone();
    let mut v = DenseMatrix::<T>::identity(n);
    // A length-d inner product of unit-scale columns carries O(d ε) rounding,
    // and every sweep reinjects correlations at that scale, so demanding
    // plain ε orthogonality can cycle forever.
    let eps = T::epsilon();
    let tol = eps * T::cast((d + 4) as f64);

    for sweep in 0..=MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma = T::zero();
                for k in 0..d {
                    alpha += b[(k, p)] * b[(k, p)];
                    beta += b[(k, q)] * b[(k, q)];
                    gamma += b[(k, p)] * b[(k, q)];
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                if sweep == MAX_SWEEPS {
                    return Err(LinalgError::NoConvergence { sweeps: MAX_SWEEPS });
                }
                rotated = true;
                let tau = (beta - alpha) / (T::cast(2.0) * gamma);
                let t = small_root(tau);
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = c * t;
                for k in 0..d {
                    let kp = b[(k, p)];
                    let kq = b[(k, q)];
                    b[(k, p)] = c * kp - s * kq;
                    b[(k, q)] = s * kp + c * kq;
                }
                for k in 0..n {
                    let kp = v[(k, p)];
                    let kq = v[(k, q)];
                    v[(k, p)] = c * kp - s * kq;
                    v[(k, q)] = s * kp + c * kq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = (0..n)
        .map(|j| {
            let mut acc = T::zero();
            for k in 0..d {
                acc += b[(k, j)] * b[(k, j)];
            }
            acc.sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));
    let singulars: Vec<T> = order.iter().map(|&j| norms[j]).collect();

    let sigma_max = singulars[0];
    let floor = sigma_max * eps;
    let mut left = DenseMatrix::<T>::zeros(d, n);
    let mut pending = Vec::new();
    for (new_j, &old_j) in order.iter().enumerate() {
        if singulars[new_j] > floor {
            let col: Vec<T> = (0..d).map(|k| b[(k, old_j)] / singulars[new_j]).collect();
            left.set_column(new_j, &col);
        } else {
            pending.push(new_j);
        }
    }
    let filled: Vec<usize> = (0..n).filter(|j| !pending.contains(j)).collect();
    let mut done = filled;
    for j in pending {
        let col = completion_column(&left, &done);
        left.set_column(j, &col);
        done.push(j);
    }

    let right = DenseMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(CompactSvd {
        left,
        singulars,
        right,
    })
}

/// Smaller-magnitude root of `t² + 2τt − 1 = 0`.
fn small_root<T: Scalar>(tau: T) -> T {
    let sign = if tau < T::zero() { -T::one() } else { T::one() };
    if tau.abs() > T::cast(1e15) {
        sign / (T::cast(2.0) * tau.abs())
    } else {
        sign / (tau.abs() + (tau * tau + T::one()).sqrt())
    }
}

/// Unit vector orthogonal to the columns of `u` listed in `used`.
///
/// Deterministically picks the standard basis vector with the largest
/// residual after projection, then reorthogonalizes once for safety.
fn completion_column<T: Scalar>(u: &DenseMatrix<T>, used: &[usize]) -> Vec<T> {
    let d = u.rows();
    let mut best: Option<(T, Vec<T>)> = None;
    for i in 0..d {
        let mut cand = vec![T::zero(); d];
        cand[i] = T::one();
        project_out(u, used, &mut cand);
        let norm = norm_of(&cand);
        if best.as_ref().is_none_or(|(n, _)| norm > *n) {
            best = Some((norm, cand));
        }
    }
    let (_, mut col) = best.expect("ambient dimension is positive");
    project_out(u, used, &mut col);
    let norm = norm_of(&col);
    for x in col.iter_mut() {
        *x = *x / norm;
    }
    col
}

fn project_out<T: Scalar>(u: &DenseMatrix<T>, used: &[usize], x: &mut [T]) {
    for &j in used {
        let mut dot = T::zero();
        for k in 0..u.rows() {
            dot += u[(k, j)] * x[k];
        }
        for k in 0..u.rows() {
            x[k] -= dot * u[(k, j)];
        }
    }
}

fn norm_of<T: Scalar>(x: &[T]) -> T {
    let mut acc = T::zero();
    for v in x {
        acc += *v * *v;
    }
    acc.sqrt()
}
