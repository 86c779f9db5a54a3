//! Grassmann-manifold primitives: orthonormal representatives, horizontal
//! tangent vectors, the geodesic exponential map, and canonical angles.
//!
//! A point of the Grassmannian G(d, p) is stored as a d×p matrix with
//! orthonormal columns (a Stiefel representative). Tangent directions live in
//! the horizontal space at a representative: d×p matrices H with `VᵀH = 0`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{compact_svd, orthonormalize, DenseMatrix, LinalgError};
use crate::scalar::Scalar;

/// Errors produced by the manifold operations.
#[derive(Debug, thiserror::Error)]
pub enum ManifoldError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    /// The candidate representative fails the orthonormality invariant.
    #[error("matrix is not orthonormal: ||Q^T Q - I||_F = {residual:.3e} exceeds {tol:.3e}")]
    NotOrthonormal { residual: f64, tol: f64 },
    /// The candidate direction is not horizontal at the base point.
    #[error("direction is not tangent at the base point: ||V^T H||_F = {residual:.3e} exceeds {tol:.3e}")]
    NotTangent { residual: f64, tol: f64 },
    /// Two subspaces live in different ambient spaces.
    #[error("ambient dimensions differ: {left} vs {right}")]
    AmbientMismatch { left: usize, right: usize },
    /// A matrix has the wrong shape for the operation.
    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        rows: usize,
        cols: usize,
    },
    /// A singular value of XᵀV exceeded 1 by more than numerical noise.
    #[error("canonical cosine {value} exceeds 1 beyond tolerance")]
    CosineOutOfRange { value: f64 },
}

/// A d×p matrix with orthonormal columns; a Grassmann-point representative.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis<T> {
    basis: DenseMatrix<T>,
}

impl<T: Scalar> OrthonormalBasis<T> {
    /// Wraps a matrix after checking `‖QᵀQ − I‖_F ≤ ORTHO_TOL`.
    pub fn new(basis: DenseMatrix<T>) -> Result<Self, ManifoldError> {
        let (rows, cols) = basis.shape();
        if cols > rows {
            return Err(LinalgError::TooManyColumns {
                op: "OrthonormalBasis::new",
                rows,
                cols,
            }
            .into());
        }
        let residual = basis.ortho_residual();
        if residual > T::ORTHO_TOL {
            return Err(ManifoldError::NotOrthonormal {
                residual: residual.as_f64(),
                tol: T::ORTHO_TOL.as_f64(),
            });
        }
        Ok(Self { basis })
    }

    /// Orthonormalizes an arbitrary full-rank matrix and wraps the result.
    pub fn orthonormalized(m: &DenseMatrix<T>) -> Result<Self, ManifoldError> {
        Self::new(orthonormalize(m)?)
    }

    /// Random subspace representative: a Gaussian matrix, orthonormalized.
    pub fn random(d: usize, p: usize, rng: &mut impl Rng) -> Self {
        assert!(p >= 1 && p <= d, "need 1 <= p <= d");
        let g = DenseMatrix::from_fn(d, p, |_, _| {
            let v: f64 = rng.sample(StandardNormal);
            T::cast(v)
        });
        // A Gaussian matrix is full rank with probability one.
        Self::orthonormalized(&g).expect("gaussian draw has full column rank")
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.basis
    }

    pub fn into_matrix(self) -> DenseMatrix<T> {
        self.basis
    }

    /// Ambient dimension d.
    pub fn ambient_dim(&self) -> usize {
        self.basis.rows()
    }

    /// Subspace dimension p.
    pub fn sub_dim(&self) -> usize {
        self.basis.cols()
    }
}

/// A horizontal tangent vector at a Grassmann point.
#[derive(Debug, Clone)]
pub struct HorizontalVector<T> {
    direction: DenseMatrix<T>,
    at: OrthonormalBasis<T>,
}

impl<T: Scalar> HorizontalVector<T> {
    /// Wraps a direction after checking `‖VᵀH‖_F ≤ TANGENT_TOL · ‖H‖_F`.
    pub fn new(at: OrthonormalBasis<T>, direction: DenseMatrix<T>) -> Result<Self, ManifoldError> {
        if direction.shape() != at.matrix().shape() {
            let (expected_rows, expected_cols) = at.matrix().shape();
            let (rows, cols) = direction.shape();
            return Err(ManifoldError::ShapeMismatch {
                expected_rows,
                expected_cols,
                rows,
                cols,
            });
        }
        let residual = at.matrix().t_matmul(&direction).frob_norm();
        let tol = T::TANGENT_TOL * direction.frob_norm().max(T::one());
        if residual > tol {
            return Err(ManifoldError::NotTangent {
                residual: residual.as_f64(),
                tol: tol.as_f64(),
            });
        }
        Ok(Self { direction, at })
    }

    pub fn direction(&self) -> &DenseMatrix<T> {
        &self.direction
    }

    pub fn at(&self) -> &OrthonormalBasis<T> {
        &self.at
    }
}

/// Projects an ambient gradient onto the horizontal space at `v`.
///
/// Computes `(I − VVᵀ)G`, the component of `G` tangent to the Grassmannian.
pub fn horizontal_project<T: Scalar>(
    v: &OrthonormalBasis<T>,
    g: &DenseMatrix<T>,
) -> Result<HorizontalVector<T>, ManifoldError> {
    if g.shape() != v.matrix().shape() {
        let (expected_rows, expected_cols) = v.matrix().shape();
        let (rows, cols) = g.shape();
        return Err(ManifoldError::ShapeMismatch {
            expected_rows,
            expected_cols,
            rows,
            cols,
        });
    }
    let vtg = v.matrix().t_matmul(g);
    let direction = g.sub(&v.matrix().matmul(&vtg));
    HorizontalVector::new(v.clone(), direction)
}

/// Geodesic step of length `lambda` along a horizontal direction.
///
/// With `JΘQᵀ` the compact SVD of the direction, the landing representative is
/// `orth(VQ cos(Θλ)Qᵀ + J sin(Θλ)Qᵀ)`. The trailing orthonormalization absorbs
/// rounding so the output always satisfies the basis invariant. Directions
/// with negligible norm return the base point unchanged.
pub fn grassmann_exp<T: Scalar>(
    v: &OrthonormalBasis<T>,
    h: &HorizontalVector<T>,
    lambda: T,
) -> Result<OrthonormalBasis<T>, ManifoldError> {
    let dir = h.direction();
    if dir.shape() != v.matrix().shape() {
        let (expected_rows, expected_cols) = v.matrix().shape();
        let (rows, cols) = dir.shape();
        return Err(ManifoldError::ShapeMismatch {
            expected_rows,
            expected_cols,
            rows,
            cols,
        });
    }
    let norm = dir.frob_norm();
    if norm < T::STEP_FLOOR {
        return Ok(v.clone());
    }
    let residual = v.matrix().t_matmul(dir).frob_norm();
    let tol = T::EXP_TANGENT_TOL * norm.max(T::one());
    if residual > tol {
        return Err(ManifoldError::NotTangent {
            residual: residual.as_f64(),
            tol: tol.as_f64(),
        });
    }

    let svd = compact_svd(dir)?;
    let p = v.sub_dim();
    let cos_d = DenseMatrix::from_fn(p, p, |i, j| {
        if i == j {
            (svd.singulars[i] * lambda).cos()
        } else {
            T::zero()
        }
    });
    let sin_d = DenseMatrix::from_fn(p, p, |i, j| {
        if i == j {
            (svd.singulars[i] * lambda).sin()
        } else {
            T::zero()
        }
    });
    let q = &svd.right;
    let cos_part = v.matrix().matmul(&q.matmul(&cos_d).matmul_t(q));
    let sin_part = svd.left.matmul(&sin_d).matmul_t(q);
    OrthonormalBasis::orthonormalized(&cos_part.add(&sin_part))
}

/// One Riemannian SGD step: project the Euclidean gradient, negate it, and
/// walk the geodesic with step `rate`.
pub fn rsgd_step<T: Scalar>(
    v: &OrthonormalBasis<T>,
    euclid_grad: &DenseMatrix<T>,
    rate: T,
) -> Result<OrthonormalBasis<T>, ManifoldError> {
    let h = horizontal_project(v, &euclid_grad.scale(-T::one()))?;
    grassmann_exp(v, &h, rate)
}

/// Canonical angles between two subspaces, ascending, `r = min(m, p)` values.
///
/// The cosines are the singular values of `XᵀV`; values above 1 by at most
/// `COS_EXCESS` are clamped, larger excursions are an error.
pub fn canonical_angles<T: Scalar>(
    x: &OrthonormalBasis<T>,
    v: &OrthonormalBasis<T>,
) -> Result<Vec<T>, ManifoldError> {
    canonical_cosines(x, v).map(|cos| cos.into_iter().map(|c| c.acos()).collect())
}

/// Cosines of the canonical angles, descending (the natural SVD order).
pub fn canonical_cosines<T: Scalar>(
    x: &OrthonormalBasis<T>,
    v: &OrthonormalBasis<T>,
) -> Result<Vec<T>, ManifoldError> {
    if x.ambient_dim() != v.ambient_dim() {
        return Err(ManifoldError::AmbientMismatch {
            left: x.ambient_dim(),
            right: v.ambient_dim(),
        });
    }
    let svd = compact_svd(&x.matrix().t_matmul(v.matrix()))?;
    svd.singulars
        .into_iter()
        .map(|s| {
            if s > T::one() + T::COS_EXCESS {
                Err(ManifoldError::CosineOutOfRange { value: s.as_f64() })
            } else {
                Ok(s.min(T::one()).max(T::zero()))
            }
        })
        .collect()
}

/// Canonical-angle similarity `Σ cos²θ_i` between two subspaces.
///
/// Equals `min(m, p)` exactly when one subspace contains the other and 0 when
/// they are orthogonal; handy for span-equality assertions.
pub fn span_similarity<T: Scalar>(
    a: &OrthonormalBasis<T>,
    b: &OrthonormalBasis<T>,
) -> Result<T, ManifoldError> {
    let cos = canonical_cosines(a, b)?;
    Ok(cos.into_iter().fold(T::zero(), |acc, c| acc + c * c))
}
