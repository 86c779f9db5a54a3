//! Activations, temperature softmax, and the loss functions with their
//! gradients with respect to the logits.

use crate::linalg::DenseMatrix;
use crate::mutual::{Activation, MutualError, RefMode, ReferenceBank};
use crate::scalar::Scalar;

/// Elementwise activation of the similarity vector.
///
/// Square root clamps negative rounding noise at zero.
pub fn activate<T: Scalar>(s: &[T], kind: Activation) -> Vec<T> {
    match kind {
        Activation::Identity => s.to_vec(),
        Activation::Sqrt => s.iter().map(|&v| v.max(T::zero()).sqrt()).collect(),
    }
}

/// Derivative of [`activate`] at the pre-activation values.
///
/// The square-root derivative `1/(2√s)` is clamped at the degenerate-norm
/// floor; hitting the clamp is logged since it signals a near-zero similarity.
pub fn activate_grad<T: Scalar>(s: &[T], kind: Activation) -> Vec<T> {
    match kind {
        Activation::Identity => vec![T::one(); s.len()],
        Activation::Sqrt => s
            .iter()
            .map(|&v| {
                let clamped = v.max(T::NORM_FLOOR);
                if v < T::NORM_FLOOR {
                    log::warn!(
                        "sqrt activation gradient clamped at floor {:.1e} (s = {:.3e})",
                        T::NORM_FLOOR.as_f64(),
                        v.as_f64()
                    );
                }
                T::one() / (T::cast(2.0) * clamped.sqrt())
            })
            .collect(),
    }
}

/// Max-shifted softmax over `τ·s`.
pub fn temp_softmax<T: Scalar>(s: &[T], tau: T) -> Vec<T> {
    debug_assert!(tau > T::zero(), "temperature must be positive");
    let mut z: Vec<T> = s.iter().map(|&v| tau * v).collect();
    let max = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut total = T::zero();
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter().map(|&e| e / total).collect()
}

/// Stable `log Σ exp(z)`.
pub fn logsumexp<T: Scalar>(z: &[T]) -> T {
    let max = z.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let sum = z.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp());
    max + sum.ln()
}

/// Cross-entropy `−(1/τ) log q_y` with its gradient with respect to the
/// logits, which collapses to the textbook `q − onehot(y)` because the 1/τ
/// prefactor cancels against the τ-scaled logits.
pub fn ce_loss<T: Scalar>(q: &[T], y: usize, tau: T) -> Result<(T, Vec<T>), MutualError> {
    if y >= q.len() {
        return Err(MutualError::LabelOutOfRange {
            label: y,
            count: q.len(),
        });
    }
    let floor = T::min_positive_value();
    let qy = if q[y] < floor {
        log::warn!(
            "ce_loss: probability underflow ({:.3e}), clamping",
            q[y].as_f64()
        );
        floor
    } else {
        q[y]
    };
    let loss = -(qy.ln()) / tau;
    let mut grad = q.to_vec();
    grad[y] -= T::one();
    Ok((loss, grad))
}

/// Reinforcement term `−(1/τ) log Σ_j exp(τ s_j)` with the pseudo-gradient
/// `−y_c q_c`, so that added to the cross-entropy gradient it reproduces the
/// negated ALSM indicator with the hard prediction replaced by soft q.
///
/// The returned gradient is deliberately not the derivative of the returned
/// value; it is the update direction the combined ALSM objective induces.
/// Finite-difference audits must therefore run with this term disabled.
pub fn reinforcement_loss<T: Scalar>(
    s: &[T],
    y: usize,
    tau: T,
) -> Result<(T, Vec<T>), MutualError> {
    if y >= s.len() {
        return Err(MutualError::LabelOutOfRange {
            label: y,
            count: s.len(),
        });
    }
    let z: Vec<T> = s.iter().map(|&v| tau * v).collect();
    let loss = -logsumexp(&z) / tau;
    let q = temp_softmax(s, tau);
    let mut grad = vec![T::zero(); s.len()];
    grad[y] = -q[y];
    Ok((loss, grad))
}

/// Repulsion loss driving the references toward mutual orthogonality:
/// `(1/K²) Σ_ij ((1/r)‖V_iᵀV_j‖_F² − δ_ij)²` with `r` the shared subspace
/// dimension. Returns the loss and its exact gradient for every reference.
///
/// The gradient `(8/(K²r)) Σ_j g_aj V_jV_jᵀV_a` covers the diagonal term too,
/// which vanishes at orthonormal references but not at the perturbed points a
/// finite-difference audit visits.
pub fn repulsion_loss<T: Scalar>(
    bank: &ReferenceBank<T>,
) -> Result<(T, Vec<DenseMatrix<T>>), MutualError> {
    if bank.mode() != RefMode::Grassmann {
        return Err(MutualError::GrassmannRequired);
    }
    let k = bank.len();
    let r = T::cast(bank.sub_dim() as f64);
    let kk = T::cast((k * k) as f64);

    let mut g = vec![vec![T::zero(); k]; k];
    let mut loss = T::zero();
    for (i, row) in g.iter_mut().enumerate() {
        for (j, gij) in row.iter_mut().enumerate() {
            let overlap = bank.get(i).t_matmul(bank.get(j)).frob_norm().powi(2);
            let delta = if i == j { T::one() } else { T::zero() };
            *gij = overlap / r - delta;
            loss += *gij * *gij;
        }
    }
    loss = loss / kk;

    let coeff = T::cast(8.0) / (kk * r);
    let grads = (0..k)
        .map(|a| {
            let va = bank.get(a);
            let mut grad = DenseMatrix::zeros(va.rows(), va.cols());
            for (j, &gaj) in g[a].iter().enumerate() {
                let vj = bank.get(j);
                let vjt_va = vj.t_matmul(va);
                grad.add_scaled_inplace(&vj.matmul(&vjt_va), coeff * gaj);
            }
            grad
        })
        .collect();
    Ok((loss, grads))
}

/// Affine head `logits = Wᵀs + b` mapping K similarities to C classes.
pub fn linear_head<T: Scalar>(s: &[T], w: &DenseMatrix<T>, b: &[T]) -> Vec<T> {
    let mut logits = w.t_mat_vec(s);
    for (l, &bias) in logits.iter_mut().zip(b) {
        *l += bias;
    }
    logits
}

/// Gradients of the affine head given upstream sensitivities on the logits:
/// `(dW, db, ds) = (s·uᵀ, u, W·u)`.
pub fn linear_head_grads<T: Scalar>(
    s: &[T],
    w: &DenseMatrix<T>,
    upstream: &[T],
) -> (DenseMatrix<T>, Vec<T>, Vec<T>) {
    let dw = DenseMatrix::outer(s, upstream);
    let db = upstream.to_vec();
    let ds = w.mat_vec(upstream);
    (dw, db, ds)
}
