//! The mutual-subspace matching layer: canonical-angle similarity against a
//! bank of learnable reference subspaces, its analytic gradients, activations,
//! temperature softmax, and the loss functions (cross-entropy, reinforcement,
//! repulsion).

mod forward;
mod loss;
mod similarity;

pub use forward::{forward, ForwardPass, Gradients};
pub use loss::{
    activate, activate_grad, ce_loss, linear_head, linear_head_grads, logsumexp,
    reinforcement_loss, repulsion_loss, temp_softmax,
};
pub use similarity::{similarity, similarity_grad, similarity_of};

use rand::Rng;

use crate::linalg::{compact_svd, DenseMatrix, LinalgError};
use crate::manifold::{ManifoldError, OrthonormalBasis};
use crate::scalar::Scalar;

/// Errors produced by the mutual-subspace layer.
#[derive(Debug, thiserror::Error)]
pub enum MutualError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    /// A grassmann-mode reference fails the orthonormality invariant.
    #[error("reference {index} is not orthonormal: residual {residual:.3e}")]
    NotOrthonormalRef { index: usize, residual: f64 },
    /// A euclidean-mode reference lost full column rank.
    #[error("reference {index} is rank deficient: sigma_min = {sigma:.3e}")]
    RankDeficientRef { index: usize, sigma: f64 },
    /// The bank must hold at least one reference.
    #[error("reference bank is empty")]
    EmptyBank,
    /// A reference disagrees with the bank's common shape.
    #[error("reference {index} has shape {rows}x{cols}, expected {expected_rows}x{expected_cols}")]
    RefShapeMismatch {
        index: usize,
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
    /// Input and bank ambient dimensions differ.
    #[error("ambient dimensions differ: input {input}, bank {bank}")]
    AmbientMismatch { input: usize, bank: usize },
    /// Inverse temperature must be positive and finite.
    #[error("temperature must be positive and finite, got {value}")]
    BadTau { value: f64 },
    /// The pseudoinverse regularizer must be positive and finite.
    #[error("epsilon must be positive and finite, got {value}")]
    BadEpsilon { value: f64 },
    /// A loss weight must be nonnegative and finite.
    #[error("loss weight must be nonnegative and finite, got {value}")]
    BadWeight { value: f64 },
    /// The operation is only defined for grassmann-mode banks.
    #[error("operation requires a grassmann-mode bank")]
    GrassmannRequired,
    /// The label does not index a class.
    #[error("label {label} out of range for {count} classes")]
    LabelOutOfRange { label: usize, count: usize },
    /// Backward needs the label provided to forward.
    #[error("backward requires a forward pass that was given a label")]
    MissingLabel,
    /// The upstream sensitivity vector has the wrong length.
    #[error("upstream length {found} does not match bank size {expected}")]
    UpstreamMismatch { expected: usize, found: usize },
    /// The linear head's weight or bias shapes are inconsistent.
    #[error("linear head shapes inconsistent: W is {rows}x{cols}, bias has {bias} entries, bank has {k} references")]
    HeadShapeMismatch {
        rows: usize,
        cols: usize,
        bias: usize,
        k: usize,
    },
    /// Regularized Gram matrix lost positive definiteness (numerical failure).
    #[error("similarity inversion failed: eigenvalue {value:.3e} is not positive")]
    NonPositiveGram { value: f64 },
}

/// How the reference matrices are constrained and learned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefMode {
    /// Orthonormal representatives updated by Riemannian SGD.
    Grassmann,
    /// Unconstrained full-rank matrices updated by Euclidean SGD, matched
    /// through the regularized pseudoinverse similarity.
    Euclidean,
}

/// K learnable reference subspaces plus their learning mode.
#[derive(Debug, Clone)]
pub struct ReferenceBank<T> {
    refs: Vec<DenseMatrix<T>>,
    mode: RefMode,
    epsilon: T,
}

/// Absolute lower bound on σ_min for euclidean-mode references.
const EUCLID_RANK_FLOOR: f64 = 1e-10;

impl<T: Scalar> ReferenceBank<T> {
    /// Validates shapes and the mode-specific invariant of every reference:
    /// orthonormality for grassmann mode, full column rank for euclidean mode.
    pub fn new(refs: Vec<DenseMatrix<T>>, mode: RefMode, epsilon: T) -> Result<Self, MutualError> {
        if refs.is_empty() {
            return Err(MutualError::EmptyBank);
        }
        if !(epsilon.is_finite() && epsilon > T::zero()) {
            return Err(MutualError::BadEpsilon {
                value: epsilon.as_f64(),
            });
        }
        let (d, p) = refs[0].shape();
        for (index, r) in refs.iter().enumerate() {
            if r.shape() != (d, p) {
                let (rows, cols) = r.shape();
                return Err(MutualError::RefShapeMismatch {
                    index,
                    rows,
                    cols,
                    expected_rows: d,
                    expected_cols: p,
                });
            }
            check_ref(index, r, mode)?;
        }
        Ok(Self {
            refs,
            mode,
            epsilon,
        })
    }

    /// Builds a bank without invariant checks. Reserved for the
    /// finite-difference auditor, which must evaluate the similarity at
    /// off-manifold perturbations of valid references.
    pub(crate) fn new_unchecked(refs: Vec<DenseMatrix<T>>, mode: RefMode, epsilon: T) -> Self {
        Self {
            refs,
            mode,
            epsilon,
        }
    }

    /// K random references: Gaussian draws, orthonormalized in both modes.
    pub fn random(
        d: usize,
        p: usize,
        k: usize,
        mode: RefMode,
        epsilon: T,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(k >= 1 && p >= 1 && p <= d, "need k >= 1 and 1 <= p <= d");
        let refs = (0..k)
            .map(|_| OrthonormalBasis::random(d, p, rng).into_matrix())
            .collect();
        Self {
            refs,
            mode,
            epsilon,
        }
    }

    pub fn refs(&self) -> &[DenseMatrix<T>] {
        &self.refs
    }

    pub fn get(&self, j: usize) -> &DenseMatrix<T> {
        &self.refs[j]
    }

    /// Replaces reference `j`, re-validating the mode invariant.
    pub fn set_ref(&mut self, j: usize, r: DenseMatrix<T>) -> Result<(), MutualError> {
        if r.shape() != (self.ambient_dim(), self.sub_dim()) {
            let (rows, cols) = r.shape();
            return Err(MutualError::RefShapeMismatch {
                index: j,
                rows,
                cols,
                expected_rows: self.ambient_dim(),
                expected_cols: self.sub_dim(),
            });
        }
        check_ref(j, &r, self.mode)?;
        self.refs[j] = r;
        Ok(())
    }

    pub fn mode(&self) -> RefMode {
        self.mode
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// Number of references K.
    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.refs[0].rows()
    }

    pub fn sub_dim(&self) -> usize {
        self.refs[0].cols()
    }
}

fn check_ref<T: Scalar>(
    index: usize,
    r: &DenseMatrix<T>,
    mode: RefMode,
) -> Result<(), MutualError> {
    match mode {
        RefMode::Grassmann => {
            let residual = r.ortho_residual();
            if residual > T::ORTHO_TOL {
                return Err(MutualError::NotOrthonormalRef {
                    index,
                    residual: residual.as_f64(),
                });
            }
        }
        RefMode::Euclidean => {
            let svd = compact_svd(r)?;
            let sigma = svd.singulars[r.cols().min(r.rows()) - 1];
            if sigma.as_f64() <= EUCLID_RANK_FLOOR {
                return Err(MutualError::RankDeficientRef {
                    index,
                    sigma: sigma.as_f64(),
                });
            }
        }
    }
    Ok(())
}

/// K-vector of similarities (logits) with its theoretical cap `min(m, p)`.
#[derive(Debug, Clone)]
pub struct SimilarityVector<T> {
    /// One similarity per reference.
    pub s: Vec<T>,
    /// Upper bound on each entry when input and references are orthonormal.
    pub r_cap: usize,
}

/// One set sample as the matching layer consumes it: either an orthonormal
/// subspace basis from PCA, or the raw autocorrelation matrix standing in
/// for the projector XXᵀ.
#[derive(Debug, Clone)]
pub enum SetInput<T> {
    /// d×m basis. Held as a plain matrix so the finite-difference auditor can
    /// evaluate at perturbed, slightly non-orthonormal points.
    Basis(DenseMatrix<T>),
    /// d×d symmetric PSD autocorrelation.
    Autocorr(DenseMatrix<T>),
}

impl<T: Scalar> SetInput<T> {
    pub fn from_basis(basis: OrthonormalBasis<T>) -> Self {
        Self::Basis(basis.into_matrix())
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Self::Basis(m) | Self::Autocorr(m) => m.rows(),
        }
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        match self {
            Self::Basis(m) | Self::Autocorr(m) => m,
        }
    }
}

/// Elementwise activation applied to the similarity vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    /// Square root, giving bounded logits in `[0, √r]`.
    Sqrt,
}

/// Whether the inverse temperature is trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauMode {
    Fixed,
    /// Trained by gradient descent on log τ, which keeps τ positive.
    Learnable,
}

/// Classification head applied after the activation.
#[derive(Debug, Clone)]
pub enum HeadKind<T> {
    /// Softmax directly over the K similarities; requires K == C.
    Softmax,
    /// Affine map `Wᵀs + b` into C logits, then softmax.
    Linear { w: DenseMatrix<T>, b: Vec<T> },
}

/// Everything downstream of the similarity vector: activation, temperature,
/// head, and the loss switches.
#[derive(Debug, Clone)]
pub struct HeadConfig<T> {
    pub activation: Activation,
    tau: T,
    pub tau_mode: TauMode,
    pub head: HeadKind<T>,
    /// Weight of the repulsion loss; 0 disables it.
    pub repulsion_weight: T,
    /// Adds the reinforcement term and its pseudo-gradient to the loss.
    pub reinforce: bool,
}

impl<T: Scalar> HeadConfig<T> {
    pub fn new(
        activation: Activation,
        tau: T,
        tau_mode: TauMode,
        head: HeadKind<T>,
        repulsion_weight: T,
        reinforce: bool,
    ) -> Result<Self, MutualError> {
        if !(tau.is_finite() && tau > T::zero()) {
            return Err(MutualError::BadTau {
                value: tau.as_f64(),
            });
        }
        if !(repulsion_weight.is_finite() && repulsion_weight >= T::zero()) {
            return Err(MutualError::BadWeight {
                value: repulsion_weight.as_f64(),
            });
        }
        Ok(Self {
            activation,
            tau,
            tau_mode,
            head,
            repulsion_weight,
            reinforce,
        })
    }

    /// Plain softmax head with identity activation and fixed τ.
    pub fn plain_softmax(tau: T) -> Result<Self, MutualError> {
        Self::new(
            Activation::Identity,
            tau,
            TauMode::Fixed,
            HeadKind::Softmax,
            T::zero(),
            false,
        )
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn set_tau(&mut self, tau: T) -> Result<(), MutualError> {
        if !(tau.is_finite() && tau > T::zero()) {
            return Err(MutualError::BadTau {
                value: tau.as_f64(),
            });
        }
        self.tau = tau;
        Ok(())
    }

    /// Number of classes the head produces logits for, given K references.
    pub fn class_count(&self, k: usize) -> usize {
        match &self.head {
            HeadKind::Softmax => k,
            HeadKind::Linear { b, .. } => b.len(),
        }
    }

    /// Checks the head's shapes against a bank of K references.
    pub fn check_shapes(&self, k: usize) -> Result<(), MutualError> {
        if let HeadKind::Linear { w, b } = &self.head {
            if w.rows() != k || w.cols() != b.len() {
                return Err(MutualError::HeadShapeMismatch {
                    rows: w.rows(),
                    cols: w.cols(),
                    bias: b.len(),
                    k,
                });
            }
        }
        Ok(())
    }
}
