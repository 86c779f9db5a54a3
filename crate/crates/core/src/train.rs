//! Mini-batch training with Euclidean SGD or Riemannian SGD on the Grassmann
//! manifold, evaluation metrics, and the finite-difference gradient auditor.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{DataError, PreparedDataset};
use crate::linalg::{sym_eig_desc, DenseMatrix, LinalgError};
use crate::manifold::{rsgd_step, ManifoldError, OrthonormalBasis};
use crate::mutual::{
    forward, Gradients, HeadConfig, HeadKind, MutualError, RefMode, ReferenceBank, SetInput,
    TauMode,
};
use crate::scalar::Scalar;

/// Errors from training, evaluation, and gradient auditing.
#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Mutual(#[from] MutualError),
    #[error(transparent)]
    Data(#[from] DataError),
    /// A config count that must be positive was zero.
    #[error("{field} must be positive")]
    NonPositiveCount { field: &'static str },
    /// The learning rate must be finite and nonnegative.
    #[error("learning rate must be finite and >= 0, got {value}")]
    BadRate { value: f64 },
    /// The decay factor must lie in (0, 1].
    #[error("rate decay must lie in (0, 1], got {value}")]
    BadDecay { value: f64 },
    /// Dataset and bank ambient dimensions differ.
    #[error("ambient dimensions differ: data {data}, bank {bank}")]
    AmbientMismatch { data: usize, bank: usize },
    /// The head produces a different class count than the dataset has.
    #[error("head produces {head} classes but the dataset has {data}")]
    ClassMismatch { head: usize, data: usize },
    /// Optimizer and reference mode must match (rsgd needs grassmann refs,
    /// sgd needs euclidean refs).
    #[error("optimizer {optimizer} requires {needs} references")]
    OptimizerMismatch {
        optimizer: &'static str,
        needs: &'static str,
    },
    /// The loss left the finite range.
    #[error("loss diverged to a non-finite value at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    /// Nothing to train or evaluate on.
    #[error("dataset is empty")]
    EmptyDataset,
    /// The reinforcement pseudo-gradient is not the derivative of the loss
    /// value, so finite differences cannot audit it.
    #[error("gradient check requires reinforcement off: its pseudo-gradient is not a derivative")]
    ReinforceNotCheckable,
    /// Class-PCA initialization needs one reference per class.
    #[error("class-pca init needs K == C, got K = {k}, C = {classes}")]
    InitKMismatch { k: usize, classes: usize },
}

/// Which update rule moves the references.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    /// Euclidean step `V ← V − λG` for euclidean-mode references.
    Sgd,
    /// Riemannian step along the Grassmann geodesic for grassmann-mode
    /// references.
    Rsgd,
}

/// Hyperparameters of one training run. Loss composition (repulsion weight,
/// reinforcement) lives on [`HeadConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate λ; zero is allowed and leaves parameters untouched.
    pub rate: f64,
    /// Multiplicative per-epoch decay in (0, 1].
    pub rate_decay: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Reshuffle sample order every epoch.
    pub shuffle: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::NonPositiveCount { field: "epochs" });
        }
        if self.batch_size == 0 {
            return Err(TrainError::NonPositiveCount {
                field: "batch_size",
            });
        }
        if !(self.rate.is_finite() && self.rate >= 0.0) {
            return Err(TrainError::BadRate { value: self.rate });
        }
        if !(self.rate_decay.is_finite() && self.rate_decay > 0.0 && self.rate_decay <= 1.0) {
            return Err(TrainError::BadDecay {
                value: self.rate_decay,
            });
        }
        Ok(())
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_acc: f64,
}

/// Loss and accuracy per epoch, serializable as TSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    /// `epoch<TAB>mean_loss<TAB>train_acc` lines, floats with 17 significant
    /// digits so identical runs serialize identically.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for stats in &self.epochs {
            out.push_str(&format!(
                "{}\t{:.16e}\t{:.16e}\n",
                stats.epoch, stats.mean_loss, stats.train_acc
            ));
        }
        out
    }
}

/// Evaluation metrics on a prepared dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Fraction of correct argmax predictions.
    pub accuracy: f64,
    /// `confusion[true_class][predicted_class]` counts.
    pub confusion: Vec<Vec<usize>>,
    /// Mean loss over the dataset.
    pub mean_loss: f64,
}

/// How the reference bank is initialized before training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BankInit {
    /// Random Gaussian draws, orthonormalized.
    Random,
    /// Per-class noncentered PCA of the pooled inputs; requires K == C.
    ClassPca,
}

fn check_compatible<T: Scalar>(
    data: &PreparedDataset<T>,
    bank: &ReferenceBank<T>,
    head: &HeadConfig<T>,
) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if data.ambient_dim() != bank.ambient_dim() {
        return Err(TrainError::AmbientMismatch {
            data: data.ambient_dim(),
            bank: bank.ambient_dim(),
        });
    }
    head.check_shapes(bank.len())?;
    let head_classes = head.class_count(bank.len());
    if head_classes != data.class_count() {
        return Err(TrainError::ClassMismatch {
            head: head_classes,
            data: data.class_count(),
        });
    }
    Ok(())
}

fn check_optimizer(optimizer: Optimizer, mode: RefMode) -> Result<(), TrainError> {
    match (optimizer, mode) {
        (Optimizer::Rsgd, RefMode::Grassmann) | (Optimizer::Sgd, RefMode::Euclidean) => Ok(()),
        (Optimizer::Rsgd, RefMode::Euclidean) => Err(TrainError::OptimizerMismatch {
            optimizer: "rsgd",
            needs: "grassmann",
        }),
        (Optimizer::Sgd, RefMode::Grassmann) => Err(TrainError::OptimizerMismatch {
            optimizer: "sgd",
            needs: "euclidean",
        }),
    }
}

/// Batch-mean gradient accumulator mirroring the parameter set.
struct GradAccum<T> {
    refs: Vec<DenseMatrix<T>>,
    w: Option<DenseMatrix<T>>,
    b: Option<Vec<T>>,
    tau: Option<T>,
}

impl<T: Scalar> GradAccum<T> {
    fn zeros(bank: &ReferenceBank<T>, head: &HeadConfig<T>) -> Self {
        let refs = bank
            .refs()
            .iter()
            .map(|r| DenseMatrix::zeros(r.rows(), r.cols()))
            .collect();
        let (w, b) = match &head.head {
            HeadKind::Softmax => (None, None),
            HeadKind::Linear { w, b } => (
                Some(DenseMatrix::zeros(w.rows(), w.cols())),
                Some(vec![T::zero(); b.len()]),
            ),
        };
        let tau = match head.tau_mode {
            TauMode::Fixed => None,
            TauMode::Learnable => Some(T::zero()),
        };
        Self { refs, w, b, tau }
    }

    fn add(&mut self, grads: &Gradients<T>) {
        for (acc, g) in self.refs.iter_mut().zip(&grads.refs) {
            acc.add_scaled_inplace(g, T::one());
        }
        if let (Some(acc), Some(g)) = (self.w.as_mut(), grads.w.as_ref()) {
            acc.add_scaled_inplace(g, T::one());
        }
        if let (Some(acc), Some(g)) = (self.b.as_mut(), grads.b.as_ref()) {
            for (a, v) in acc.iter_mut().zip(g) {
                *a += *v;
            }
        }
        if let (Some(acc), Some(g)) = (self.tau.as_mut(), grads.tau) {
            *acc += g;
        }
    }

    fn scale(&mut self, factor: T) {
        for acc in &mut self.refs {
            *acc = acc.scale(factor);
        }
        if let Some(acc) = self.w.as_mut() {
            *acc = acc.scale(factor);
        }
        if let Some(acc) = self.b.as_mut() {
            for a in acc.iter_mut() {
                *a *= factor;
            }
        }
        if let Some(acc) = self.tau.as_mut() {
            *acc *= factor;
        }
    }
}

fn apply_update<T: Scalar>(
    bank: &mut ReferenceBank<T>,
    head: &mut HeadConfig<T>,
    accum: &GradAccum<T>,
    rate: T,
    optimizer: Optimizer,
) -> Result<(), TrainError> {
    for j in 0..bank.len() {
        let updated = match optimizer {
            Optimizer::Rsgd => {
                let v = OrthonormalBasis::new(bank.get(j).clone())?;
                rsgd_step(&v, &accum.refs[j], rate)?.into_matrix()
            }
            Optimizer::Sgd => {
                let mut v = bank.get(j).clone();
                v.add_scaled_inplace(&accum.refs[j], -rate);
                v
            }
        };
        bank.set_ref(j, updated)?;
    }
    if let HeadKind::Linear { w, b } = &mut head.head {
        if let Some(gw) = &accum.w {
            w.add_scaled_inplace(gw, -rate);
        }
        if let (Some(gb),) = (&accum.b,) {
            for (bi, g) in b.iter_mut().zip(gb) {
                *bi -= rate * *g;
            }
        }
    }
    if let Some(gtau) = accum.tau {
        // Gradient step on log τ keeps the temperature positive.
        let tau = head.tau();
        head.set_tau(tau * (-rate * tau * gtau).exp())?;
    }
    Ok(())
}

/// Trains bank and head on the prepared dataset.
///
/// Per batch: forward/backward every sample against the batch-start
/// parameters, average the gradients, take one optimizer step. Shuffling,
/// when enabled, reorders samples each epoch from the run seed, so a fixed
/// `(seed, dataset)` pair reproduces the trajectory bit for bit.
pub fn train<T: Scalar>(
    data: &PreparedDataset<T>,
    bank: &mut ReferenceBank<T>,
    head: &mut HeadConfig<T>,
    config: &TrainConfig,
) -> Result<History, TrainError> {
    config.validate()?;
    check_compatible(data, bank, head)?;
    check_optimizer(config.optimizer, bank.mode())?;
    if config.rate == 0.0 {
        log::warn!("learning rate is 0; parameters will not move");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut rate = config.rate;
    let mut history = History::default();
    let total = data.len();

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..total).collect();
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        // Indexed by sample so the epoch mean does not depend on the visit
        // order of the summation.
        let mut sample_loss = vec![0.0f64; total];
        let mut correct = 0usize;

        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            let mut accum = GradAccum::zeros(bank, head);
            for &i in batch {
                let label = data.labels()[i];
                let pass = forward(&data.inputs()[i], bank, head, Some(label))?;
                let loss = pass.loss.expect("label was provided");
                if !loss.is_finite() {
                    return Err(TrainError::Diverged {
                        epoch,
                        batch: batch_index,
                    });
                }
                sample_loss[i] = loss.as_f64();
                if pass.prediction() == label {
                    correct += 1;
                }
                accum.add(&pass.backward(bank, head)?);
            }
            if rate > 0.0 {
                accum.scale(T::one() / T::cast(batch.len() as f64));
                apply_update(bank, head, &accum, T::cast(rate), config.optimizer)?;
            }
        }

        history.epochs.push(EpochStats {
            epoch,
            mean_loss: sample_loss.iter().sum::<f64>() / total as f64,
            train_acc: correct as f64 / total as f64,
        });
        rate *= config.rate_decay;
    }
    Ok(history)
}

/// Computes accuracy, the confusion matrix, and the mean loss of the current
/// parameters on a prepared dataset.
pub fn evaluate<T: Scalar>(
    data: &PreparedDataset<T>,
    bank: &ReferenceBank<T>,
    head: &HeadConfig<T>,
) -> Result<EvalReport, TrainError> {
    check_compatible(data, bank, head)?;
    let classes = data.class_count();
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for (input, &label) in data.inputs().iter().zip(data.labels()) {
        let pass = forward(input, bank, head, Some(label))?;
        let predicted = pass.prediction();
        confusion[label][predicted] += 1;
        if predicted == label {
            correct += 1;
        }
        loss_sum += pass.loss.expect("label was provided").as_f64();
    }
    Ok(EvalReport {
        accuracy: correct as f64 / data.len() as f64,
        confusion,
        mean_loss: loss_sum / data.len() as f64,
    })
}

/// Builds a reference bank for a dataset, either randomly or from per-class
/// noncentered PCA of the pooled inputs.
pub fn init_bank<T: Scalar>(
    data: &PreparedDataset<T>,
    mode: RefMode,
    k: usize,
    p: usize,
    epsilon: T,
    init: BankInit,
    seed: u64,
) -> Result<ReferenceBank<T>, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let d = data.ambient_dim();
    match init {
        BankInit::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(ReferenceBank::random(d, p, k, mode, epsilon, &mut rng))
        }
        BankInit::ClassPca => {
            let classes = data.class_count();
            if k != classes {
                return Err(TrainError::InitKMismatch { k, classes });
            }
            let mut pooled = vec![DenseMatrix::zeros(d, d); classes];
            for (input, &label) in data.inputs().iter().zip(data.labels()) {
                let contribution = match input {
                    SetInput::Basis(x) => x.matmul_t(x),
                    SetInput::Autocorr(a) => a.clone(),
                };
                pooled[label].add_scaled_inplace(&contribution, T::one());
            }
            let mut refs = Vec::with_capacity(classes);
            for (c, autocorr) in pooled.iter().enumerate() {
                let eig = sym_eig_desc(autocorr)?;
                let floor = eig.values[0].max(T::zero()) * T::RANK_REL;
                let rank = eig.values.iter().filter(|&&v| v > floor).count();
                if rank < p {
                    return Err(TrainError::Data(DataError::RankDeficientSet {
                        rank,
                        needed: p,
                    }));
                }
                let _ = c;
                refs.push(eig.vectors.leading_columns(p));
            }
            Ok(ReferenceBank::new(refs, mode, epsilon)?)
        }
    }
}

/// One audited parameter block of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCheck {
    /// Block identifier: `ref<j>`, `input`, `w`, `b`, or `tau`.
    pub name: String,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

/// Outcome of comparing every analytic gradient against central finite
/// differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    /// Coordinate with the largest relative error, e.g. `ref2[(4,1)]`.
    pub worst: String,
}

/// Compares every analytic gradient of the forward pass against central
/// finite differences with the given step.
///
/// Relative errors are normalized per block by the larger of the analytic and
/// numeric infinity norms, floored at 1e-8. Reinforcement must be off; its
/// pseudo-gradient deliberately differs from the loss derivative.
pub fn grad_check<T: Scalar>(
    input: &SetInput<T>,
    bank: &ReferenceBank<T>,
    head: &HeadConfig<T>,
    y: usize,
    step: f64,
) -> Result<GradCheckReport, TrainError> {
    if head.reinforce {
        return Err(TrainError::ReinforceNotCheckable);
    }
    let pass = forward(input, bank, head, Some(y))?;
    let grads = pass.backward(bank, head)?;
    let h = T::cast(step);

    let loss_at = |bank: &ReferenceBank<T>,
                   head: &HeadConfig<T>,
                   input: &SetInput<T>|
     -> Result<T, TrainError> {
        Ok(forward(input, bank, head, Some(y))?
            .loss
            .expect("label was provided"))
    };

    let mut blocks = Vec::new();
    let mut worst = (0.0f64, String::from("none"));

    // References.
    for j in 0..bank.len() {
        let (rows, cols) = bank.get(j).shape();
        let mut pairs = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let eval = |delta: T| -> Result<T, TrainError> {
                    let mut refs = bank.refs().to_vec();
                    refs[j][(r, c)] += delta;
                    let perturbed = ReferenceBank::new_unchecked(refs, bank.mode(), bank.epsilon());
                    loss_at(&perturbed, head, input)
                };
                let fd = (eval(h)? - eval(-h)?).as_f64() / (2.0 * step);
                pairs.push((
                    format!("ref{j}[({r},{c})]"),
                    grads.refs[j][(r, c)].as_f64(),
                    fd,
                ));
            }
        }
        blocks.push(summarize_block(format!("ref{j}"), &pairs, &mut worst));
    }

    // Input. Autocorrelation entries are perturbed symmetrically, so the
    // off-diagonal finite difference sees both mirrored analytic entries.
    {
        let m = input.matrix();
        let symmetric = matches!(input, SetInput::Autocorr(_));
        let mut pairs = Vec::new();
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                if symmetric && c < r {
                    continue;
                }
                let eval = |delta: T| -> Result<T, TrainError> {
                    let mut perturbed = m.clone();
                    perturbed[(r, c)] += delta;
                    if symmetric && r != c {
                        perturbed[(c, r)] += delta;
                    }
                    let perturbed = match input {
                        SetInput::Basis(_) => SetInput::Basis(perturbed),
                        SetInput::Autocorr(_) => SetInput::Autocorr(perturbed),
                    };
                    loss_at(bank, head, &perturbed)
                };
                let fd = (eval(h)? - eval(-h)?).as_f64() / (2.0 * step);
                let analytic = if symmetric && r != c {
                    (grads.input[(r, c)] + grads.input[(c, r)]).as_f64()
                } else {
                    grads.input[(r, c)].as_f64()
                };
                pairs.push((format!("input[({r},{c})]"), analytic, fd));
            }
        }
        blocks.push(summarize_block("input".into(), &pairs, &mut worst));
    }

    // Affine head.
    if let HeadKind::Linear { w, b } = &head.head {
        let gw = grads.w.as_ref().expect("linear head has a W gradient");
        let mut pairs = Vec::new();
        for r in 0..w.rows() {
            for c in 0..w.cols() {
                let eval = |delta: T| -> Result<T, TrainError> {
                    let mut head = head.clone();
                    if let HeadKind::Linear { w, .. } = &mut head.head {
                        w[(r, c)] += delta;
                    }
                    loss_at(bank, &head, input)
                };
                let fd = (eval(h)? - eval(-h)?).as_f64() / (2.0 * step);
                pairs.push((format!("w[({r},{c})]"), gw[(r, c)].as_f64(), fd));
            }
        }
        blocks.push(summarize_block("w".into(), &pairs, &mut worst));

        let gb = grads.b.as_ref().expect("linear head has a bias gradient");
        let mut pairs = Vec::new();
        for i in 0..b.len() {
            let eval = |delta: T| -> Result<T, TrainError> {
                let mut head = head.clone();
                if let HeadKind::Linear { b, .. } = &mut head.head {
                    b[i] += delta;
                }
                loss_at(bank, &head, input)
            };
            let fd = (eval(h)? - eval(-h)?).as_f64() / (2.0 * step);
            pairs.push((format!("b[{i}]"), gb[i].as_f64(), fd));
        }
        blocks.push(summarize_block("b".into(), &pairs, &mut worst));
    }

    // Temperature. The probe shrinks near zero so τ ± h stays positive.
    if head.tau_mode == TauMode::Learnable {
        let tau_step = step.min(head.tau().as_f64() / 2.0);
        let th = T::cast(tau_step);
        let eval = |delta: T| -> Result<T, TrainError> {
            let mut head = head.clone();
            head.set_tau(head.tau() + delta)?;
            loss_at(bank, &head, input)
        };
        let fd = (eval(th)? - eval(-th)?).as_f64() / (2.0 * tau_step);
        let analytic = grads.tau.expect("learnable tau has a gradient").as_f64();
        let pairs = vec![("tau".to_string(), analytic, fd)];
        blocks.push(summarize_block("tau".into(), &pairs, &mut worst));
    }

    let max_rel_error = blocks
        .iter()
        .map(|b| b.max_rel_error)
        .fold(0.0f64, f64::max);
    let count: usize = blocks.len();
    let mean_rel_error = if count == 0 {
        0.0
    } else {
        blocks.iter().map(|b| b.mean_rel_error).sum::<f64>() / count as f64
    };
    Ok(GradCheckReport {
        blocks,
        max_rel_error,
        mean_rel_error,
        worst: worst.1,
    })
}

/// Folds (name, analytic, numeric) triples of one block into its error
/// summary, tracking the globally worst coordinate.
fn summarize_block(
    name: String,
    pairs: &[(String, f64, f64)],
    worst: &mut (f64, String),
) -> BlockCheck {
    let denom = pairs
        .iter()
        .flat_map(|(_, a, n)| [a.abs(), n.abs()])
        .fold(0.0f64, f64::max)
        .max(1e-8);
    let mut max_rel = 0.0f64;
    let mut sum_rel = 0.0f64;
    for (id, a, n) in pairs {
        let rel = (a - n).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
        }
        if rel > worst.0 {
            *worst = (rel, id.clone());
        }
        sum_rel += rel;
    }
    BlockCheck {
        name,
        max_rel_error: max_rel,
        mean_rel_error: if pairs.is_empty() {
            0.0
        } else {
            sum_rel / pairs.len() as f64
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, prepare_inputs, InputMode, SynthSpec};
    use crate::manifold::horizontal_project;
    use crate::mutual::Activation;

    fn separable_task() -> (PreparedDataset<f64>, PreparedDataset<f64>) {
        let spec = SynthSpec {
            d: 8,
            classes: 2,
            sets_per_class: 10,
            n: 6,
            true_dim: 2,
            sigma: 0.05,
            seed: 42,
        };
        let (train, test) = generate_synthetic::<f64>(&spec).unwrap();
        (
            prepare_inputs(&train, InputMode::Pca { m: 2 }).unwrap(),
            prepare_inputs(&test, InputMode::Pca { m: 2 }).unwrap(),
        )
    }

    fn default_config() -> TrainConfig {
        TrainConfig {
            epochs: 30,
            batch_size: 4,
            rate: 0.05,
            rate_decay: 0.95,
            seed: 42,
            optimizer: Optimizer::Rsgd,
            shuffle: true,
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let ok = default_config();
        assert!(ok.validate().is_ok());
        assert!(matches!(
            TrainConfig { epochs: 0, ..ok }.validate().unwrap_err(),
            TrainError::NonPositiveCount { field: "epochs" }
        ));
        assert!(matches!(
            TrainConfig { rate: -0.1, ..ok }.validate().unwrap_err(),
            TrainError::BadRate { .. }
        ));
        assert!(matches!(
            TrainConfig {
                rate_decay: 0.0,
                ..ok
            }
            .validate()
            .unwrap_err(),
            TrainError::BadDecay { .. }
        ));
    }

    #[test]
    fn zero_rate_leaves_parameters_untouched() {
        let (data, _) = separable_task();
        let mut bank =
            init_bank(&data, RefMode::Grassmann, 2, 2, 1e-6, BankInit::Random, 1).unwrap();
        let before = bank.refs().to_vec();
        let mut head = HeadConfig::plain_softmax(5.0).unwrap();
        let config = TrainConfig {
            rate: 0.0,
            epochs: 3,
            ..default_config()
        };
        let history = train(&data, &mut bank, &mut head, &config).unwrap();
        assert_eq!(bank.refs(), &before[..]);
        assert_eq!(history.epochs.len(), 3);
        assert!(history
            .epochs
            .iter()
            .all(|e| e.mean_loss == history.epochs[0].mean_loss));
    }

    #[test]
    fn single_batch_epoch_matches_hand_composed_step() {
        let (data, _) = separable_task();
        let mut bank =
            init_bank(&data, RefMode::Grassmann, 2, 2, 1e-6, BankInit::Random, 3).unwrap();
        let reference_bank = bank.clone();
        let mut head = HeadConfig::plain_softmax(5.0).unwrap();
        let config = TrainConfig {
            epochs: 1,
            batch_size: data.len(),
            rate: 0.1,
            rate_decay: 1.0,
            shuffle: false,
            ..default_config()
        };
        train(&data, &mut bank, &mut head, &config).unwrap();

        // Oracle: average the per-sample gradients, one rsgd_step per ref.
        let oracle_head = HeadConfig::plain_softmax(5.0).unwrap();
        let mut mean = vec![DenseMatrix::<f64>::zeros(8, 2); 2];
        for (input, &label) in data.inputs().iter().zip(data.labels()) {
            let pass = forward(input, &reference_bank, &oracle_head, Some(label)).unwrap();
            let grads = pass.backward(&reference_bank, &oracle_head).unwrap();
            for (m, g) in mean.iter_mut().zip(&grads.refs) {
                m.add_scaled_inplace(g, 1.0);
            }
        }
        for (j, m) in mean.iter().enumerate() {
            let scaled = m.scale(1.0 / data.len() as f64);
            let v = OrthonormalBasis::new(reference_bank.get(j).clone()).unwrap();
            let stepped = rsgd_step(&v, &scaled, 0.1).unwrap();
            let diff = stepped.into_matrix().sub(bank.get(j)).frob_norm();
            assert!(diff < 1e-14, "ref {j} differs by {diff}");
        }
    }

    #[test]
    fn separable_task_trains_to_high_accuracy() {
        let (data, test) = separable_task();
        let mut bank =
            init_bank(&data, RefMode::Grassmann, 2, 2, 1e-6, BankInit::Random, 5).unwrap();
        let mut head = HeadConfig::plain_softmax(5.0).unwrap();
        let history = train(&data, &mut bank, &mut head, &default_config()).unwrap();

        let last = history.epochs.last().unwrap();
        assert!(last.train_acc >= 0.95, "train acc {}", last.train_acc);
        assert!(last.mean_loss < history.epochs[0].mean_loss);
        for r in bank.refs() {
            assert!(r.ortho_residual() < 1e-6);
        }
        let report = evaluate(&test, &bank, &head).unwrap();
        assert!(report.accuracy >= 0.75, "test acc {}", report.accuracy);
    }

    #[test]
    fn training_is_deterministic() {
        let (data, _) = separable_task();
        let run = || {
            let mut bank =
                init_bank(&data, RefMode::Grassmann, 2, 2, 1e-6, BankInit::Random, 5).unwrap();
            let mut head = HeadConfig::plain_softmax(5.0).unwrap();
            let history = train(&data, &mut bank, &mut head, &default_config()).unwrap();
            (bank, history)
        };
        let (bank_a, history_a) = run();
        let (bank_b, history_b) = run();
        assert_eq!(bank_a.refs(), bank_b.refs());
        assert_eq!(history_a, history_b);
        assert_eq!(history_a.to_tsv(), history_b.to_tsv());
    }

    #[test]
    fn class_pca_init_is_a_strong_start() {
        let (data, test) = separable_task();
        let bank = init_bank(&data, RefMode::Grassmann, 2, 2, 1e-6, BankInit::ClassPca, 0).unwrap();
        let head = HeadConfig::plain_softmax(5.0).unwrap();
        let report = evaluate(&test, &bank, &head).unwrap();
        assert!(report.accuracy >= 0.9, "accuracy {}", report.accuracy);
        assert!(matches!(
            init_bank(&data, RefMode::Grassmann, 3, 2, 1e-6, BankInit::ClassPca, 0).unwrap_err(),
            TrainError::InitKMismatch { k: 3, classes: 2 }
        ));
    }

    #[test]
    fn optimizer_and_mode_must_match() {
        let (data, _) = separable_task();
        let mut grassmann =
            init_bank(&data, RefMode::Grassmann, 2, 2, 1e-6, BankInit::Random, 1).unwrap();
        let mut head = HeadConfig::plain_softmax(1.0).unwrap();
        let sgd = TrainConfig {
            optimizer: Optimizer::Sgd,
            ..default_config()
        };
        assert!(matches!(
            train(&data, &mut grassmann, &mut head, &sgd).unwrap_err(),
            TrainError::OptimizerMismatch {
                optimizer: "sgd",
                ..
            }
        ));
        let mut euclidean =
            init_bank(&data, RefMode::Euclidean, 2, 2, 1e-6, BankInit::Random, 1).unwrap();
        assert!(matches!(
            train(&data, &mut euclidean, &mut head, &default_config()).unwrap_err(),
            TrainError::OptimizerMismatch {
                optimizer: "rsgd",
                ..
            }
        ));
    }

    #[test]
    fn divergence_is_reported_with_location() {
        // Trace of VᵀAV overflows to infinity, so the shifted softmax hits
        // inf − inf and the loss goes NaN.
        let huge = DenseMatrix::from_fn(4, 4, |i, j| if i == j { 1e308 } else { 0.0 });
        let data = PreparedDataset::new(
            vec![SetInput::Autocorr(huge.clone()), SetInput::Autocorr(huge)],
            vec![0, 1],
            2,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bank = ReferenceBank::random(4, 2, 2, RefMode::Grassmann, 1e-6, &mut rng);
        let mut head = HeadConfig::plain_softmax(1.0).unwrap();
        let err = train(&data, &mut bank, &mut head, &default_config()).unwrap_err();
        assert!(matches!(err, TrainError::Diverged { epoch: 1, batch: 0 }));
    }

    #[test]
    fn evaluate_checks_bookkeeping_identities() {
        let (_, test) = separable_task();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let bank = ReferenceBank::random(8, 2, 2, RefMode::Grassmann, 1e-6, &mut rng);
        let head = HeadConfig::plain_softmax(1.0).unwrap();
        let report = evaluate(&test, &bank, &head).unwrap();
        let sizes = {
            let mut sizes = vec![0usize; test.class_count()];
            for &label in test.labels() {
                sizes[label] += 1;
            }
            sizes
        };
        for (row, &size) in report.confusion.iter().zip(&sizes) {
            assert_eq!(row.iter().sum::<usize>(), size);
        }
        let diag: usize = (0..2).map(|c| report.confusion[c][c]).sum();
        assert!((report.accuracy - diag as f64 / test.len() as f64).abs() < 1e-15);
    }

    #[test]
    fn chance_level_on_random_labels() {
        // Random bank against balanced random-label inputs: accuracy should
        // sit near 1/C. 3σ binomial band around 0.5 for 200 samples.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let inputs: Vec<SetInput<f64>> = (0..200)
            .map(|_| SetInput::from_basis(OrthonormalBasis::random(10, 2, &mut rng)))
            .collect();
        let labels: Vec<usize> = (0..200).map(|i| i % 2).collect();
        let data = PreparedDataset::new(inputs, labels, 2).unwrap();
        let bank = ReferenceBank::random(10, 2, 2, RefMode::Grassmann, 1e-6, &mut rng);
        let head = HeadConfig::plain_softmax(1.0).unwrap();
        let report = evaluate(&data, &bank, &head).unwrap();
        let sigma = (0.25f64 / 200.0).sqrt();
        assert!((report.accuracy - 0.5).abs() <= 3.0 * sigma + 1e-12);
    }

    fn gradcheck_instance(
        mode: RefMode,
        seed: u64,
    ) -> (SetInput<f64>, ReferenceBank<f64>, HeadConfig<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bank = ReferenceBank::random(10, 3, 4, mode, 1e-6, &mut rng);
        let head = HeadConfig::new(
            Activation::Sqrt,
            1.2,
            TauMode::Learnable,
            HeadKind::Softmax,
            0.3,
            false,
        )
        .unwrap();
        let input = SetInput::from_basis(OrthonormalBasis::random(10, 3, &mut rng));
        (input, bank, head)
    }

    #[test]
    fn grad_check_passes_on_grassmann_instance() {
        let (input, bank, head) = gradcheck_instance(RefMode::Grassmann, 31);
        let report = grad_check(&input, &bank, &head, 2, 1e-5).unwrap();
        assert!(
            report.max_rel_error < 1e-5,
            "max {} at {}",
            report.max_rel_error,
            report.worst
        );
        assert!(report.blocks.iter().any(|b| b.name == "tau"));
    }

    #[test]
    fn grad_check_passes_on_euclidean_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let bank = ReferenceBank::random(10, 3, 4, RefMode::Euclidean, 1e-6, &mut rng);
        let head = HeadConfig::new(
            Activation::Identity,
            1.0,
            TauMode::Fixed,
            HeadKind::Softmax,
            0.0,
            false,
        )
        .unwrap();
        let input = SetInput::from_basis(OrthonormalBasis::random(10, 3, &mut rng));
        let report = grad_check(&input, &bank, &head, 1, 1e-5).unwrap();
        assert!(
            report.max_rel_error < 1e-4,
            "max {} at {}",
            report.max_rel_error,
            report.worst
        );
    }

    #[test]
    fn grad_check_rejects_reinforcement_and_absurd_steps() {
        let (input, bank, mut head) = gradcheck_instance(RefMode::Grassmann, 41);
        head.reinforce = true;
        assert!(matches!(
            grad_check(&input, &bank, &head, 0, 1e-5).unwrap_err(),
            TrainError::ReinforceNotCheckable
        ));
        head.reinforce = false;
        let report = grad_check(&input, &bank, &head, 0, 10.0).unwrap();
        assert!(report.max_rel_error > 1e-2);
    }

    #[test]
    fn rsgd_trajectory_stays_on_the_manifold() {
        let (data, _) = separable_task();
        let mut bank =
            init_bank(&data, RefMode::Grassmann, 2, 2, 1e-6, BankInit::Random, 7).unwrap();
        let mut head = HeadConfig::plain_softmax(5.0).unwrap();
        let config = TrainConfig {
            epochs: 50,
            batch_size: 1,
            rate: 0.08,
            rate_decay: 1.0,
            ..default_config()
        };
        train(&data, &mut bank, &mut head, &config).unwrap();
        for r in bank.refs() {
            assert!(r.ortho_residual() < 1e-6);
        }
    }

    #[test]
    fn learnable_tau_moves_under_training() {
        let (data, _) = separable_task();
        let mut bank =
            init_bank(&data, RefMode::Grassmann, 2, 2, 1e-6, BankInit::Random, 9).unwrap();
        let mut head = HeadConfig::new(
            Activation::Identity,
            1.0,
            TauMode::Learnable,
            HeadKind::Softmax,
            0.0,
            false,
        )
        .unwrap();
        let config = TrainConfig {
            epochs: 5,
            ..default_config()
        };
        train(&data, &mut bank, &mut head, &config).unwrap();
        assert!(head.tau() > 0.0 && head.tau().is_finite());
        assert_ne!(head.tau(), 1.0);
    }

    #[test]
    fn gradient_step_agrees_with_projection_composition() {
        // rsgd_step == exp(project(−g)) is a manifold-module invariant; spot
        // check it through the train-facing path with a real gradient.
        let (data, _) = separable_task();
        let bank = init_bank(&data, RefMode::Grassmann, 2, 2, 1e-6, BankInit::Random, 11).unwrap();
        let head = HeadConfig::plain_softmax(2.0).unwrap();
        let pass = forward(&data.inputs()[0], &bank, &head, Some(data.labels()[0])).unwrap();
        let grads = pass.backward(&bank, &head).unwrap();
        let v = OrthonormalBasis::new(bank.get(0).clone()).unwrap();
        let stepped = rsgd_step(&v, &grads.refs[0], 0.05).unwrap();
        let projected = horizontal_project(&v, &grads.refs[0].scale(-1.0)).unwrap();
        let composed = crate::manifold::grassmann_exp(&v, &projected, 0.05).unwrap();
        assert!(stepped.matrix().sub(composed.matrix()).frob_norm() < 1e-14);
    }
}
