//! Composition of the full matching head: similarity, activation, optional
//! affine head, temperature softmax, and the loss terms, with a backward pass
//! producing every parameter gradient.

use crate::linalg::DenseMatrix;
use crate::mutual::{
    activate, activate_grad, ce_loss, linear_head, linear_head_grads, logsumexp,
    reinforcement_loss, repulsion_loss, similarity_grad, similarity_of, temp_softmax, HeadConfig,
    HeadKind, MutualError, ReferenceBank, SetInput, SimilarityVector, TauMode,
};
use crate::scalar::Scalar;

/// Cached intermediates of one forward evaluation, sufficient to run
/// [`ForwardPass::backward`] without recomputation.
#[derive(Debug, Clone)]
pub struct ForwardPass<T> {
    input: SetInput<T>,
    /// Raw similarities against the bank.
    pub sim: SimilarityVector<T>,
    /// Similarities after the elementwise activation.
    pub activated: Vec<T>,
    /// Pre-softmax class scores (activated similarities, or the affine head's
    /// output).
    pub logits: Vec<T>,
    /// Temperature softmax over the logits.
    pub probabilities: Vec<T>,
    /// Total loss; present when a label was supplied.
    pub loss: Option<T>,
    label: Option<usize>,
    repulsion: Option<(T, Vec<DenseMatrix<T>>)>,
}

/// Gradients of the total loss with respect to every learnable quantity and
/// the input. Head entries are present only when the config has them.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    /// One gradient per reference, in the ambient (Euclidean) sense.
    pub refs: Vec<DenseMatrix<T>>,
    /// Gradient with respect to the input matrix (basis or autocorrelation).
    pub input: DenseMatrix<T>,
    /// Gradient of the affine head weights, for linear heads.
    pub w: Option<DenseMatrix<T>>,
    /// Gradient of the affine head bias, for linear heads.
    pub b: Option<Vec<T>>,
    /// Gradient of the temperature, when it is learnable.
    pub tau: Option<T>,
}

/// Runs the matching head on one input set.
///
/// With a label the loss is `L_CE + γ_rp · L_RP`, plus the reinforcement term
/// when enabled; without a label only the probabilities are produced.
pub fn forward<T: Scalar>(
    input: &SetInput<T>,
    bank: &ReferenceBank<T>,
    head: &HeadConfig<T>,
    label: Option<usize>,
) -> Result<ForwardPass<T>, MutualError> {
    if input.ambient_dim() != bank.ambient_dim() {
        return Err(MutualError::AmbientMismatch {
            input: input.ambient_dim(),
            bank: bank.ambient_dim(),
        });
    }
    head.check_shapes(bank.len())?;
    let classes = head.class_count(bank.len());
    if let Some(y) = label {
        if y >= classes {
            return Err(MutualError::LabelOutOfRange {
                label: y,
                count: classes,
            });
        }
    }

    let sim = similarity_of(input, bank)?;
    let activated = activate(&sim.s, head.activation);
    let logits = match &head.head {
        HeadKind::Softmax => activated.clone(),
        HeadKind::Linear { w, b } => linear_head(&activated, w, b),
    };
    let probabilities = temp_softmax(&logits, head.tau());

    let mut loss = None;
    let mut repulsion = None;
    if let Some(y) = label {
        let (ce, _) = ce_loss(&probabilities, y, head.tau())?;
        let mut total = ce;
        if head.reinforce {
            let (re, _) = reinforcement_loss(&logits, y, head.tau())?;
            total += re;
        }
        if head.repulsion_weight > T::zero() {
            let (rp, rp_grads) = repulsion_loss(bank)?;
            total += head.repulsion_weight * rp;
            repulsion = Some((rp, rp_grads));
        }
        loss = Some(total);
    }

    Ok(ForwardPass {
        input: input.clone(),
        sim,
        activated,
        logits,
        probabilities,
        loss,
        label,
        repulsion,
    })
}

impl<T: Scalar> ForwardPass<T> {
    /// Predicted class: argmax of the probabilities, lowest index on ties.
    pub fn prediction(&self) -> usize {
        let mut best = 0;
        for (j, &p) in self.probabilities.iter().enumerate().skip(1) {
            if p > self.probabilities[best] {
                best = j;
            }
        }
        best
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    /// Backpropagates the cached loss, returning gradients for the references,
    /// the input, the affine head (if any), and τ (if learnable).
    ///
    /// With reinforcement enabled the logit sensitivity is the combined
    /// pseudo-gradient `−(y − q + y⊙q)`, not the derivative of the cached
    /// loss value.
    pub fn backward(
        &self,
        bank: &ReferenceBank<T>,
        head: &HeadConfig<T>,
    ) -> Result<Gradients<T>, MutualError> {
        let y = self.label.ok_or(MutualError::MissingLabel)?;
        let (_, mut dlogits) = ce_loss(&self.probabilities, y, head.tau())?;
        if head.reinforce {
            let (_, re_grad) = reinforcement_loss(&self.logits, y, head.tau())?;
            for (d, r) in dlogits.iter_mut().zip(&re_grad) {
                *d += *r;
            }
        }

        let tau_grad = match head.tau_mode {
            TauMode::Fixed => None,
            TauMode::Learnable => Some(self.tau_gradient(head)),
        };

        let (w_grad, b_grad, mut dact) = match &head.head {
            HeadKind::Softmax => (None, None, dlogits),
            HeadKind::Linear { w, .. } => {
                let (dw, db, ds) = linear_head_grads(&self.activated, w, &dlogits);
                (Some(dw), Some(db), ds)
            }
        };

        let slope = activate_grad(&self.sim.s, head.activation);
        for (d, g) in dact.iter_mut().zip(&slope) {
            *d *= *g;
        }
        let (mut ref_grads, input_grad) = similarity_grad(&self.input, bank, &dact)?;

        if let Some((_, rp_grads)) = &self.repulsion {
            for (g, rp) in ref_grads.iter_mut().zip(rp_grads) {
                g.add_scaled_inplace(rp, head.repulsion_weight);
            }
        }

        Ok(Gradients {
            refs: ref_grads,
            input: input_grad,
            w: w_grad,
            b: b_grad,
            tau: tau_grad,
        })
    }

    /// dL/dτ of the cached loss: `−lse(τz)/τ² + Σ_j q_j z_j / τ` for the
    /// cross-entropy, plus its negation for the reinforcement term.
    fn tau_gradient(&self, head: &HeadConfig<T>) -> T {
        let tau = head.tau();
        let z: Vec<T> = self.logits.iter().map(|&v| tau * v).collect();
        let lse = logsumexp(&z);
        let expectation = self
            .probabilities
            .iter()
            .zip(&self.logits)
            .fold(T::zero(), |acc, (&q, &l)| acc + q * l);
        let ce_part = expectation / tau - lse / (tau * tau);
        if head.reinforce {
            T::zero()
        } else {
            ce_part
        }
    }
}
