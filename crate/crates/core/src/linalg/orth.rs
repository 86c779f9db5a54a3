use crate::linalg::{compact_svd, DenseMatrix, LinalgError};
use crate::scalar::Scalar;

/// Orthonormalizes the columns of a full-column-rank matrix.
///
/// Modified Gram-Schmidt with reorthogonalization, so the result keeps the
/// column order and span of the input; an already orthonormal input passes
/// through essentially unchanged. Rank is checked up front via the singular
/// values, and deficiency is reported with the offending value.
pub fn orthonormalize<T: Scalar>(m: &DenseMatrix<T>) -> Result<DenseMatrix<T>, LinalgError> {
    let (rows, cols) = m.shape();
    if cols > rows {
        return Err(LinalgError::TooManyColumns {
            op: "orthonormalize",
            rows,
            cols,
        });
    }
    let svd = compact_svd(m)?;
    let threshold = T::RANK_REL * svd.singulars[0];
    let sigma_min = svd.singulars[cols - 1];
    if sigma_min <= threshold {
        return Err(LinalgError::RankDeficient {
            index: cols - 1,
            sigma: sigma_min.as_f64(),
            threshold: threshold.as_f64(),
        });
    }

    let mut q = m.clone();
    for j in 0..cols {
        let mut col = q.column(j);
        // Kahan's twice-is-enough rule, repeated while the norm keeps collapsing.
        for pass in 0..4 {
            let before = norm_of(&col);
            for i in 0..j {
                let qi = q.column(i);
                let mut dot = T::zero();
                for k in 0..rows {
                    dot += qi[k] * col[k];
                }
                for k in 0..rows {
                    col[k] -= dot * qi[k];
                }
            }
            let after = norm_of(&col);
            if pass > 0 && after >= T::cast(0.5) * before {
                break;
            }
        }
        let norm = norm_of(&col);
        if norm <= T::NORM_FLOOR {
            return Err(LinalgError::RankDeficient {
                index: j,
                sigma: norm.as_f64(),
                threshold: T::NORM_FLOOR.as_f64(),
            });
        }
        for v in col.iter_mut() {
            *v = *v / norm;
        }
        q.set_column(j, &col);
    }
    Ok(q)
}

fn norm_of<T: Scalar>(x: &[T]) -> T {
    let mut acc = T::zero();
    for v in x {
        acc += *v * *v;
    }
    acc.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthonormal_input_is_fixed_point() {
        let m = DenseMatrix::<f64>::identity(3).leading_columns(2);
        let q = orthonormalize(&m).unwrap();
        assert!(q.sub(&m).frob_norm() < 1e-12);
    }

    #[test]
    fn column_scaling_is_removed() {
        let m = DenseMatrix::<f64>::new(2, 2, vec![2.0, 0.0, 0.0, 3.0]).unwrap();
        let q = orthonormalize(&m).unwrap();
        let cases: [(usize, usize, f64); 4] = [(0, 0, 1.0), (1, 1, 1.0), (0, 1, 0.0), (1, 0, 0.0)];
        for (i, j, want) in cases {
            assert!((q[(i, j)].abs() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn random_input_becomes_orthonormal_with_same_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let m = DenseMatrix::from_fn(8, 3, |_, _| rng.gen_range(-1.0..1.0));
        let q = orthonormalize(&m).unwrap();
        assert!(q.ortho_residual() < 1e-12);
        // Span check against the SVD's left factor: all canonical cosines 1.
        let u = compact_svd(&m).unwrap().left;
        let overlap = compact_svd(&u.t_matmul(&q)).unwrap();
        let total: f64 = overlap.singulars.iter().map(|s| s * s).sum();
        assert!((total - 3.0).abs() < 1e-10);
    }

    #[test]
    fn idempotent_to_machine_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let m = DenseMatrix::from_fn(6, 4, |_, _| rng.gen_range(-1.0..1.0));
        let once = orthonormalize(&m).unwrap();
        let twice = orthonormalize(&once).unwrap();
        assert!(twice.sub(&once).frob_norm() < 1e-12);
    }

    #[test]
    fn rank_deficiency_is_reported_with_singular_value() {
        let m = DenseMatrix::new(3, 2, vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap();
        match orthonormalize(&m) {
            Err(LinalgError::RankDeficient { sigma, .. }) => assert!(sigma < 1e-12),
            other => panic!("expected rank error, got {other:?}"),
        }
    }

    #[test]
    fn wide_matrix_is_rejected() {
        let m = DenseMatrix::<f64>::zeros(2, 3);
        assert!(matches!(
            orthonormalize(&m),
            Err(LinalgError::TooManyColumns { .. })
        ));
    }
}
