//! The classical vector-input subspace methods: SM class-subspace fitting,
//! LSM online rotate-toward/away updates, the ALSM batch update with its
//! indicator function, and the CapPro similarity used by the equivalence
//! checks.
//!
//! Class labels are 0-based throughout the crate.

use crate::linalg::{sym_eig_desc, DenseMatrix, LinalgError};
use crate::manifold::{ManifoldError, OrthonormalBasis};
use crate::scalar::Scalar;

/// Errors produced by the classical subspace methods.
#[derive(Debug, thiserror::Error)]
pub enum ClassicError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    /// A class autocorrelation matrix has too little rank for the requested m.
    #[error("class {class} autocorrelation has rank {rank}, need at least {needed}")]
    RankDeficientClass {
        class: usize,
        rank: usize,
        needed: usize,
    },
    /// Sample dimension differs from the model's ambient dimension.
    #[error("dimension mismatch: model expects {expected}, sample has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    /// A label exceeds the number of classes.
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    /// Fewer than two classes appear in the data.
    #[error("need at least 2 classes, found {found}")]
    TooFewClasses { found: usize },
    /// A sample vector contains NaN or infinity.
    #[error("sample vector entry {index} is not finite")]
    NonFiniteVector { index: usize },
    /// A learning rate fails the positive-and-finite requirement.
    #[error("learning rate must be positive and finite, got {value}")]
    BadRate { value: f64 },
    /// The batch update needs at least one sample.
    #[error("batch is empty")]
    EmptyBatch,
    /// CapPro's gradient weight 1/‖Vᵀx‖ is undefined near zero.
    #[error("projection norm {norm:.3e} is at or below {floor:.3e}; CapPro gradient undefined")]
    DegenerateProjection { norm: f64, floor: f64 },
}

/// One labeled feature vector.
#[derive(Debug, Clone)]
pub struct LabeledVector<T> {
    x: Vec<T>,
    y: usize,
}

impl<T: Scalar> LabeledVector<T> {
    /// Validates finiteness of the features.
    pub fn new(x: Vec<T>, y: usize) -> Result<Self, ClassicError> {
        match x.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(ClassicError::NonFiniteVector { index }),
            None => Ok(Self { x, y }),
        }
    }

    pub fn features(&self) -> &[T] {
        &self.x
    }

    pub fn label(&self) -> usize {
        self.y
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

/// Per-case LSM learning rates (reinforce α, punish pair β, γ).
#[derive(Debug, Clone, Copy)]
pub struct LsmRates<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
}

impl<T: Scalar> LsmRates<T> {
    /// Validates that every rate is positive and finite.
    pub fn new(alpha: T, beta: T, gamma: T) -> Result<Self, ClassicError> {
        for rate in [alpha, beta, gamma] {
            if !(rate.is_finite() && rate > T::zero()) {
                return Err(ClassicError::BadRate {
                    value: rate.as_f64(),
                });
            }
        }
        Ok(Self { alpha, beta, gamma })
    }
}

/// One orthonormal basis per class, all sharing ambient and subspace dims.
#[derive(Debug, Clone)]
pub struct ClassSubspaces<T> {
    bases: Vec<OrthonormalBasis<T>>,
}

impl<T: Scalar> ClassSubspaces<T> {
    /// Validates shared dimensions and a class count of at least two.
    pub fn new(bases: Vec<OrthonormalBasis<T>>) -> Result<Self, ClassicError> {
        if bases.len() < 2 {
            return Err(ClassicError::TooFewClasses { found: bases.len() });
        }
        let d = bases[0].ambient_dim();
        let m = bases[0].sub_dim();
        for b in &bases {
            if b.ambient_dim() != d || b.sub_dim() != m {
                return Err(ClassicError::DimensionMismatch {
                    expected: d,
                    found: b.ambient_dim(),
                });
            }
        }
        Ok(Self { bases })
    }

    pub fn class_count(&self) -> usize {
        self.bases.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.bases[0].ambient_dim()
    }

    pub fn sub_dim(&self) -> usize {
        self.bases[0].sub_dim()
    }

    pub fn basis(&self, class: usize) -> &OrthonormalBasis<T> {
        &self.bases[class]
    }

    pub fn bases(&self) -> &[OrthonormalBasis<T>] {
        &self.bases
    }

    fn set_basis(&mut self, class: usize, basis: OrthonormalBasis<T>) {
        self.bases[class] = basis;
    }
}

/// Fits the subspace method: per class, the top-m eigenvectors of the
/// uncentered autocorrelation `A_c = Σ_{y_i=c} x_i x_iᵀ`.
pub fn fit_sm<T: Scalar>(
    samples: &[LabeledVector<T>],
    m: usize,
) -> Result<ClassSubspaces<T>, ClassicError> {
    if samples.is_empty() {
        return Err(ClassicError::EmptyBatch);
    }
    let d = samples[0].dim();
    let classes = samples.iter().map(|s| s.label() + 1).max().unwrap_or(0);
    if classes < 2 {
        return Err(ClassicError::TooFewClasses { found: classes });
    }
    for s in samples {
        if s.dim() != d {
            return Err(ClassicError::DimensionMismatch {
                expected: d,
                found: s.dim(),
            });
        }
    }

    let mut bases = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut a = DenseMatrix::<T>::zeros(d, d);
        for s in samples.iter().filter(|s| s.label() == c) {
            a.add_scaled_inplace(&DenseMatrix::outer(s.features(), s.features()), T::one());
        }
        let eig = sym_eig_desc(&a)?;
        let leading = eig.values[0].max(T::zero());
        let rank = eig
            .values
            .iter()
            .filter(|&&v| v > T::RANK_REL * leading && v > T::zero())
            .count();
        if rank < m {
            return Err(ClassicError::RankDeficientClass {
                class: c,
                rank,
                needed: m,
            });
        }
        bases.push(OrthonormalBasis::new(eig.vectors.leading_columns(m))?);
    }
    ClassSubspaces::new(bases)
}

/// Predicted class: `argmax_c ‖V_cᵀx‖₂`, ties broken by the lowest index.
///
/// A zero input vector scores zero everywhere; the prediction falls back to
/// class 0 and the event is logged as a warning.
pub fn lsm_predict<T: Scalar>(model: &ClassSubspaces<T>, x: &[T]) -> usize {
    let scores = projection_scores(model, x);
    let best = argmax(&scores);
    if scores[best] <= T::NORM_FLOOR {
        log::warn!("lsm_predict: zero projection scores, defaulting to class 0");
        return 0;
    }
    best
}

fn projection_scores<T: Scalar>(model: &ClassSubspaces<T>, x: &[T]) -> Vec<T> {
    model
        .bases()
        .iter()
        .map(|v| norm_of(&v.matrix().t_mat_vec(x)))
        .collect()
}

fn argmax<T: Scalar>(scores: &[T]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// One LSM online update.
///
/// A correct prediction reinforces the class subspace with
/// `orth((I + αxxᵀ)V_y)`; a wrong one reinforces `V_y` with rate β and
/// punishes the predicted class with `orth((I − γxxᵀ)V_q)`. Every other
/// basis is left untouched.
pub fn lsm_update<T: Scalar>(
    model: &mut ClassSubspaces<T>,
    sample: &LabeledVector<T>,
    rates: &LsmRates<T>,
) -> Result<(), ClassicError> {
    check_sample(model, sample)?;
    let q = lsm_predict(model, sample.features());
    let y = sample.label();
    if q == y {
        let updated = rank_one_rotate(model.basis(y), sample.features(), rates.alpha)?;
        model.set_basis(y, updated);
    } else {
        let reinforced = rank_one_rotate(model.basis(y), sample.features(), rates.beta)?;
        let punished = rank_one_rotate(model.basis(q), sample.features(), -rates.gamma)?;
        model.set_basis(y, reinforced);
        model.set_basis(q, punished);
    }
    Ok(())
}

/// `orth((I + rate · xxᵀ) V)` computed without forming the d×d matrix.
fn rank_one_rotate<T: Scalar>(
    v: &OrthonormalBasis<T>,
    x: &[T],
    rate: T,
) -> Result<OrthonormalBasis<T>, ClassicError> {
    let vtx = v.matrix().t_mat_vec(x);
    let mut m = v.matrix().clone();
    m.add_scaled_inplace(&DenseMatrix::outer(x, &vtx), rate);
    Ok(OrthonormalBasis::orthonormalized(&m)?)
}

fn check_sample<T: Scalar>(
    model: &ClassSubspaces<T>,
    sample: &LabeledVector<T>,
) -> Result<(), ClassicError> {
    if sample.dim() != model.ambient_dim() {
        return Err(ClassicError::DimensionMismatch {
            expected: model.ambient_dim(),
            found: sample.dim(),
        });
    }
    if sample.label() >= model.class_count() {
        return Err(ClassicError::LabelOutOfRange {
            label: sample.label(),
            classes: model.class_count(),
        });
    }
    Ok(())
}

/// ALSM's reinforce/punish indicator for class `c` given prediction `q` and
/// label `y`: +1 on a hit or a false negative, −1 on a false positive, else 0.
pub fn indicator(c: usize, q: usize, y: usize) -> i32 {
    if c == y {
        1
    } else if c == q {
        -1
    } else {
        0
    }
}

/// One ALSM batch update with a shared learning rate.
///
/// Every prediction uses the pre-update model; each class then moves by
/// `orth(V_c + α Σ_i ι(c, q_i, y_i) · x_i x_iᵀ V_c)` with the empirical,
/// unnormalized sum over the batch.
pub fn alsm_batch_update<T: Scalar>(
    model: &mut ClassSubspaces<T>,
    batch: &[LabeledVector<T>],
    alpha: T,
) -> Result<(), ClassicError> {
    if batch.is_empty() {
        return Err(ClassicError::EmptyBatch);
    }
    for sample in batch {
        check_sample(model, sample)?;
    }
    let predictions: Vec<usize> = batch
        .iter()
        .map(|s| lsm_predict(model, s.features()))
        .collect();

    for c in 0..model.class_count() {
        let v = model.basis(c).matrix();
        let mut updated = v.clone();
        for (sample, &q) in batch.iter().zip(&predictions) {
            let iota = indicator(c, q, sample.label());
            if iota == 0 {
                continue;
            }
            let vtx = v.t_mat_vec(sample.features());
            updated.add_scaled_inplace(
                &DenseMatrix::outer(sample.features(), &vtx),
                alpha * T::cast(iota as f64),
            );
        }
        model.set_basis(c, OrthonormalBasis::orthonormalized(&updated)?);
    }
    Ok(())
}

/// CapPro class score `s = ‖Vᵀx‖₂` for a (not necessarily orthonormal) V.
pub fn cappro_score<T: Scalar>(v: &DenseMatrix<T>, x: &[T]) -> T {
    norm_of(&v.t_mat_vec(x))
}

/// Gradient of the CapPro score: `upstream · w · xxᵀV` with `w = ‖Vᵀx‖⁻¹`.
///
/// The weight is undefined when the projection norm vanishes; that case is a
/// documented singularity and reported as an error.
pub fn cappro_grad<T: Scalar>(
    v: &DenseMatrix<T>,
    x: &[T],
    upstream: T,
) -> Result<DenseMatrix<T>, ClassicError> {
    let vtx = v.t_mat_vec(x);
    let norm = norm_of(&vtx);
    if norm <= T::NORM_FLOOR {
        return Err(ClassicError::DegenerateProjection {
            norm: norm.as_f64(),
            floor: T::NORM_FLOOR.as_f64(),
        });
    }
    let w = T::one() / norm;
    Ok(DenseMatrix::outer(x, &vtx).scale(upstream * w))
}

fn norm_of<T: Scalar>(x: &[T]) -> T {
    let mut acc = T::zero();
    for v in x {
        acc += *v * *v;
    }
    acc.sqrt()
}
