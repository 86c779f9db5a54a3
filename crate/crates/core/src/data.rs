//! Dataset types, the set-to-subspace front ends (noncentered PCA and the
//! autocorrelation approximation), synthetic data generation, and the
//! bit-exact text format for sets on disk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::classic::LabeledVector;
use crate::linalg::{sym_eig_desc, DenseMatrix, LinalgError};
use crate::manifold::{ManifoldError, OrthonormalBasis};
use crate::mutual::SetInput;
use crate::scalar::Scalar;

/// Errors from dataset construction, conversion, generation, and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    /// A dataset must hold at least one set.
    #[error("dataset is empty")]
    EmptyDataset,
    /// Classification needs at least two classes.
    #[error("need at least 2 classes, got {count}")]
    TooFewClasses { count: usize },
    /// A set's label does not index a class.
    #[error("label {label} out of range for {count} classes")]
    LabelOutOfRange { label: usize, count: usize },
    /// A set's ambient dimension disagrees with the dataset's.
    #[error("set {index} has ambient dimension {found}, expected {expected}")]
    AmbientMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    /// A spec count that must be positive was zero.
    #[error("{field} must be positive")]
    NonPositiveCount { field: &'static str },
    /// The generating subspace cannot exceed the ambient dimension.
    #[error("true_dim {true_dim} exceeds ambient dimension {d}")]
    TrueDimTooLarge { true_dim: usize, d: usize },
    /// The noise level must be finite and nonnegative.
    #[error("noise sigma must be finite and >= 0, got {value}")]
    BadSigma { value: f64 },
    /// The set spans fewer directions than the requested subspace dimension.
    #[error("set has rank {rank}, need {needed} for the requested subspace")]
    RankDeficientSet { rank: usize, needed: usize },
    /// Normalization hit a zero column.
    #[error("column {column} has zero norm and cannot be normalized")]
    DegenerateColumn { column: usize },
    /// Filesystem failure outside the parse path.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// A set file referenced by the manifest does not exist.
    #[error("{path} (referenced at manifest line {manifest_line}) not found")]
    MissingFile { path: PathBuf, manifest_line: usize },
    /// A line failed to parse.
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    /// A set file's ambient dimension disagrees with the rest of the dataset.
    #[error("{path}:{line}: ambient dimension {found} does not match {expected}")]
    InconsistentAmbient {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    /// The manifest holds no entries.
    #[error("manifest {path} is empty")]
    EmptyManifest { path: PathBuf },
}

/// One image set: a d×n matrix whose columns are the set's feature vectors,
/// plus its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSetMatrix<T> {
    features: DenseMatrix<T>,
    label: usize,
}

impl<T: Scalar> ImageSetMatrix<T> {
    /// Finiteness and n >= 1 are already guaranteed by [`DenseMatrix`].
    pub fn new(features: DenseMatrix<T>, label: usize) -> Self {
        Self { features, label }
    }

    pub fn features(&self) -> &DenseMatrix<T> {
        &self.features
    }

    pub fn label(&self) -> usize {
        self.label
    }

    pub fn ambient_dim(&self) -> usize {
        self.features.rows()
    }

    /// Number of vectors in the set.
    pub fn set_size(&self) -> usize {
        self.features.cols()
    }
}

/// A labeled collection of image sets sharing one ambient dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    sets: Vec<ImageSetMatrix<T>>,
    class_count: usize,
    ambient: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(sets: Vec<ImageSetMatrix<T>>, class_count: usize) -> Result<Self, DataError> {
        if sets.is_empty() {
            return Err(DataError::EmptyDataset);
        }
        if class_count < 2 {
            return Err(DataError::TooFewClasses { count: class_count });
        }
        let ambient = sets[0].ambient_dim();
        for (index, set) in sets.iter().enumerate() {
            if set.ambient_dim() != ambient {
                return Err(DataError::AmbientMismatch {
                    index,
                    expected: ambient,
                    found: set.ambient_dim(),
                });
            }
            if set.label() >= class_count {
                return Err(DataError::LabelOutOfRange {
                    label: set.label(),
                    count: class_count,
                });
            }
        }
        Ok(Self {
            sets,
            class_count,
            ambient,
        })
    }

    pub fn sets(&self) -> &[ImageSetMatrix<T>] {
        &self.sets
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Number of sets per class.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.class_count];
        for set in &self.sets {
            sizes[set.label()] += 1;
        }
        sizes
    }
}

/// Recipe for a synthetic set-classification task: per class one true
/// subspace, each set sampled from it with additive Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    /// Ambient dimension d.
    pub d: usize,
    /// Number of classes C.
    pub classes: usize,
    /// Sets drawn per class before the train/test split.
    pub sets_per_class: usize,
    /// Vectors per set n.
    pub n: usize,
    /// Dimension of each class's generating subspace.
    pub true_dim: usize,
    /// Standard deviation of the ambient noise.
    pub sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        for (value, field) in [
            (self.d, "d"),
            (self.classes, "classes"),
            (self.sets_per_class, "sets_per_class"),
            (self.n, "n"),
            (self.true_dim, "true_dim"),
        ] {
            if value == 0 {
                return Err(DataError::NonPositiveCount { field });
            }
        }
        if self.classes < 2 {
            return Err(DataError::TooFewClasses {
                count: self.classes,
            });
        }
        if self.sets_per_class < 2 {
            return Err(DataError::NonPositiveCount {
                field: "sets_per_class (need >= 2 for a train/test split)",
            });
        }
        if self.true_dim > self.d {
            return Err(DataError::TrueDimTooLarge {
                true_dim: self.true_dim,
                d: self.d,
            });
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(DataError::BadSigma { value: self.sigma });
        }
        Ok(())
    }
}

/// Recipe for the flat labeled-vector task the classical methods consume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorSynthSpec {
    pub d: usize,
    pub classes: usize,
    /// Samples drawn per class before the train/test split.
    pub samples_per_class: usize,
    /// Dimension of each class's generating subspace.
    pub true_dim: usize,
    /// Standard deviation of the ambient noise.
    pub sigma: f64,
    pub seed: u64,
    /// Scale every sample to unit norm (subspace methods compare directions).
    pub normalize: bool,
}

impl VectorSynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        SynthSpec {
            d: self.d,
            classes: self.classes,
            sets_per_class: self.samples_per_class,
            n: 1,
            true_dim: self.true_dim,
            sigma: self.sigma,
            seed: self.seed,
        }
        .validate()
    }
}

/// Noncentered PCA: the top-m eigenvectors of HHᵀ, ordered by descending
/// eigenvalue.
pub fn set_to_subspace<T: Scalar>(
    set: &ImageSetMatrix<T>,
    m: usize,
) -> Result<OrthonormalBasis<T>, DataError> {
    let autocorr = set.features().matmul_t(set.features());
    let eig = sym_eig_desc(&autocorr)?;
    let floor = eig.values[0].max(T::zero()) * T::RANK_REL;
    let rank = eig.values.iter().filter(|&&v| v > floor).count();
    if rank < m {
        return Err(DataError::RankDeficientSet { rank, needed: m });
    }
    Ok(OrthonormalBasis::new(eig.vectors.leading_columns(m))?)
}

/// The autocorrelation matrix HHᵀ, standing in for the PCA projector XXᵀ.
///
/// With `normalize` each column is scaled to unit norm first, so the trace
/// equals n up to rounding.
pub fn set_to_autocorr<T: Scalar>(
    set: &ImageSetMatrix<T>,
    normalize: bool,
) -> Result<DenseMatrix<T>, DataError> {
    let mut h = set.features().clone();
    if normalize {
        for l in 0..h.cols() {
            let norm = h.column(l).iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
            if norm <= T::NORM_FLOOR {
                return Err(DataError::DegenerateColumn { column: l });
            }
            let scaled: Vec<T> = h.column(l).iter().map(|&v| v / norm).collect();
            h.set_column(l, &scaled);
        }
    }
    Ok(h.matmul_t(&h))
}

fn gauss<T: Scalar>(rng: &mut impl Rng) -> T {
    T::cast(rng.sample::<f64, _>(StandardNormal))
}

/// Held-out fraction: at least one set per class, a fifth when possible.
fn test_count(per_class: usize) -> usize {
    (per_class / 5).max(1)
}

/// Like [`generate_synthetic`], also returning each class's true generating
/// subspace for oracle-model tests.
#[allow(clippy::type_complexity)]
pub fn generate_synthetic_with_bases<T: Scalar>(
    spec: &SynthSpec,
) -> Result<(Dataset<T>, Dataset<T>, Vec<OrthonormalBasis<T>>), DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sigma = T::cast(spec.sigma);
    let held_out = test_count(spec.sets_per_class);

    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut bases = Vec::new();
    for c in 0..spec.classes {
        let basis = OrthonormalBasis::<T>::random(spec.d, spec.true_dim, &mut rng);
        for s in 0..spec.sets_per_class {
            let mut features = DenseMatrix::zeros(spec.d, spec.n);
            for l in 0..spec.n {
                let coeff: Vec<T> = (0..spec.true_dim).map(|_| gauss(&mut rng)).collect();
                let mut x = basis.matrix().mat_vec(&coeff);
                for entry in x.iter_mut() {
                    *entry += sigma * gauss::<T>(&mut rng);
                }
                features.set_column(l, &x);
            }
            let set = ImageSetMatrix::new(features, c);
            if s < spec.sets_per_class - held_out {
                train.push(set);
            } else {
                test.push(set);
            }
        }
        bases.push(basis);
    }
    Ok((
        Dataset::new(train, spec.classes)?,
        Dataset::new(test, spec.classes)?,
        bases,
    ))
}

/// Synthetic set-classification task, split 80/20 into train and test by
/// whole sets. Deterministic in the seed.
pub fn generate_synthetic<T: Scalar>(
    spec: &SynthSpec,
) -> Result<(Dataset<T>, Dataset<T>), DataError> {
    let (train, test, _) = generate_synthetic_with_bases(spec)?;
    Ok((train, test))
}

/// Synthetic labeled-vector task for the classical per-vector methods,
/// split 80/20 like [`generate_synthetic`].
#[allow(clippy::type_complexity)]
pub fn generate_synthetic_vectors<T: Scalar>(
    spec: &VectorSynthSpec,
) -> Result<(Vec<LabeledVector<T>>, Vec<LabeledVector<T>>), DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sigma = T::cast(spec.sigma);
    let held_out = test_count(spec.samples_per_class);

    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..spec.classes {
        let basis = OrthonormalBasis::<T>::random(spec.d, spec.true_dim, &mut rng);
        for s in 0..spec.samples_per_class {
            let coeff: Vec<T> = (0..spec.true_dim).map(|_| gauss(&mut rng)).collect();
            let mut x = basis.matrix().mat_vec(&coeff);
            for entry in x.iter_mut() {
                *entry += sigma * gauss::<T>(&mut rng);
            }
            if spec.normalize {
                let norm = x.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
                if norm > T::NORM_FLOOR {
                    for entry in x.iter_mut() {
                        *entry = *entry / norm;
                    }
                }
            }
            let sample = LabeledVector::new(x, c).expect("generated sample is finite");
            if s < spec.samples_per_class - held_out {
                train.push(sample);
            } else {
                test.push(sample);
            }
        }
    }
    Ok((train, test))
}

/// How raw sets are turned into matching-layer inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputMode {
    /// Noncentered PCA to an m-dimensional orthonormal basis.
    Pca { m: usize },
    /// Autocorrelation matrix, optionally column-normalized.
    Ac { normalized: bool },
}

/// A dataset converted to matching-layer inputs, ready for training.
#[derive(Debug, Clone)]
pub struct PreparedDataset<T> {
    inputs: Vec<SetInput<T>>,
    labels: Vec<usize>,
    class_count: usize,
    ambient: usize,
}

impl<T: Scalar> PreparedDataset<T> {
    pub fn new(
        inputs: Vec<SetInput<T>>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self, DataError> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(DataError::EmptyDataset);
        }
        if class_count < 2 {
            return Err(DataError::TooFewClasses { count: class_count });
        }
        let ambient = inputs[0].ambient_dim();
        for (index, input) in inputs.iter().enumerate() {
            if input.ambient_dim() != ambient {
                return Err(DataError::AmbientMismatch {
                    index,
                    expected: ambient,
                    found: input.ambient_dim(),
                });
            }
        }
        for &label in &labels {
            if label >= class_count {
                return Err(DataError::LabelOutOfRange {
                    label,
                    count: class_count,
                });
            }
        }
        Ok(Self {
            inputs,
            labels,
            class_count,
            ambient,
        })
    }

    pub fn inputs(&self) -> &[SetInput<T>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Converts every set of a dataset through the chosen front end.
pub fn prepare_inputs<T: Scalar>(
    dataset: &Dataset<T>,
    mode: InputMode,
) -> Result<PreparedDataset<T>, DataError> {
    let mut inputs = Vec::with_capacity(dataset.len());
    let mut labels = Vec::with_capacity(dataset.len());
    for set in dataset.sets() {
        let input = match mode {
            InputMode::Pca { m } => SetInput::from_basis(set_to_subspace(set, m)?),
            InputMode::Ac { normalized } => SetInput::Autocorr(set_to_autocorr(set, normalized)?),
        };
        inputs.push(input);
        labels.push(set.label());
    }
    PreparedDataset::new(inputs, labels, dataset.class_count())
}

/// Serializes a float with 17 significant digits, enough for a 64-bit
/// round trip.
fn format_float(value: f64) -> String {
    format!("{value:.16e}")
}

/// Writes the dataset under `dir` as one set file per set plus a
/// `manifest.tsv` of `<relative-path>\t<label>` lines. Returns the manifest
/// path.
pub fn save_dataset<T: Scalar>(dataset: &Dataset<T>, dir: &Path) -> Result<PathBuf, DataError> {
    std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut manifest = String::new();
    for (i, set) in dataset.sets().iter().enumerate() {
        let name = format!("set_{i:05}.txt");
        let h = set.features();
        let mut content = format!("{} {}\n", h.rows(), h.cols());
        for l in 0..h.cols() {
            for j in 0..h.rows() {
                if j > 0 {
                    content.push(' ');
                }
                let _ = write!(content, "{}", format_float(h[(j, l)].as_f64()));
            }
            content.push('\n');
        }
        let path = dir.join(&name);
        std::fs::write(&path, content).map_err(|source| DataError::Io { path, source })?;
        let _ = writeln!(manifest, "{name}\t{}", set.label());
    }
    let manifest_path = dir.join("manifest.tsv");
    std::fs::write(&manifest_path, manifest).map_err(|source| DataError::Io {
        path: manifest_path.clone(),
        source,
    })?;
    Ok(manifest_path)
}

/// Loads a dataset from a manifest written by [`save_dataset`] (or by hand).
/// Paths are resolved relative to the manifest's directory; the class count
/// is the largest label plus one.
pub fn load_dataset<T: Scalar>(manifest_path: &Path) -> Result<Dataset<T>, DataError> {
    let text = std::fs::read_to_string(manifest_path).map_err(|source| DataError::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));

    let mut sets: Vec<ImageSetMatrix<T>> = Vec::new();
    let mut max_label = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let manifest_line = lineno + 1;
        let (rel, label_text) = line.split_once('\t').ok_or_else(|| DataError::Malformed {
            path: manifest_path.to_path_buf(),
            line: manifest_line,
            reason: "expected `<relative-path>\\t<label>`".into(),
        })?;
        let label: usize = label_text
            .trim()
            .parse()
            .map_err(|_| DataError::Malformed {
                path: manifest_path.to_path_buf(),
                line: manifest_line,
                reason: format!("label `{label_text}` is not a nonnegative integer"),
            })?;
        let set_path = base.join(rel);
        let features = load_set_file::<T>(&set_path, manifest_line)?;
        if let Some(first) = sets.first() {
            if features.rows() != first.ambient_dim() {
                return Err(DataError::InconsistentAmbient {
                    path: set_path,
                    line: 1,
                    expected: first.ambient_dim(),
                    found: features.rows(),
                });
            }
        }
        max_label = max_label.max(label);
        sets.push(ImageSetMatrix::new(features, label));
    }
    if sets.is_empty() {
        return Err(DataError::EmptyManifest {
            path: manifest_path.to_path_buf(),
        });
    }
    let class_count = max_label + 1;
    if class_count < 2 {
        return Err(DataError::TooFewClasses { count: class_count });
    }
    let dataset = Dataset::new(sets, class_count)?;
    for (c, size) in dataset.class_sizes().iter().enumerate() {
        if *size == 0 {
            log::warn!("class {c} has no sets in {}", manifest_path.display());
        }
    }
    Ok(dataset)
}

/// Parses one set file: header `d n`, then n lines of d floats, each line one
/// column of H.
fn load_set_file<T: Scalar>(
    path: &Path,
    manifest_line: usize,
) -> Result<DenseMatrix<T>, DataError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile {
                path: path.to_path_buf(),
                manifest_line,
            }
        } else {
            DataError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    let malformed = |line: usize, reason: String| DataError::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(1, "missing `d n` header".into()))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    let (d, n) = match dims.as_slice() {
        [d_text, n_text] => {
            let d = d_text
                .parse::<usize>()
                .map_err(|_| malformed(1, format!("bad dimension `{d_text}` in header")))?;
            let n = n_text
                .parse::<usize>()
                .map_err(|_| malformed(1, format!("bad count `{n_text}` in header")))?;
            (d, n)
        }
        _ => {
            return Err(malformed(
                1,
                format!("header must be `d n`, got `{header}`"),
            ))
        }
    };
    if d == 0 || n == 0 {
        return Err(malformed(1, "dimensions must be positive".into()));
    }

    let mut features = DenseMatrix::zeros(d, n);
    let mut column = 0usize;
    for (lineno, raw) in lines {
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        if column >= n {
            return Err(malformed(
                lineno + 1,
                format!("found more than the declared {n} vectors"),
            ));
        }
        let mut values = Vec::with_capacity(d);
        for token in line.split_whitespace() {
            let value: f64 = token
                .parse()
                .map_err(|_| malformed(lineno + 1, format!("bad float `{token}`")))?;
            if !value.is_finite() {
                return Err(malformed(lineno + 1, format!("non-finite value `{token}`")));
            }
            values.push(T::cast(value));
        }
        if values.len() != d {
            return Err(malformed(
                lineno + 1,
                format!("expected {d} values, found {}", values.len()),
            ));
        }
        features.set_column(column, &values);
        column += 1;
    }
    if column != n {
        return Err(malformed(
            text.lines().count(),
            format!("expected {n} vectors, found {column}"),
        ));
    }
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::span_similarity;
    use rand::Rng;

    fn unit_set(columns: &[[f64; 3]], label: usize) -> ImageSetMatrix<f64> {
        let mut m = DenseMatrix::zeros(3, columns.len());
        for (l, col) in columns.iter().enumerate() {
            m.set_column(l, col);
        }
        ImageSetMatrix::new(m, label)
    }

    #[test]
    fn repeated_vector_dominates_first_component() {
        let set = unit_set(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], 0);
        let basis = set_to_subspace(&set, 1).unwrap();
        assert!((basis.matrix()[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthonormal_set_spans_itself() {
        let set = unit_set(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], 0);
        let basis = set_to_subspace(&set, 2).unwrap();
        let original = OrthonormalBasis::new(set.features().clone()).unwrap();
        assert!((span_similarity(&original, &basis).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn subspace_matches_eigendecomposition_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(241);
        let features = DenseMatrix::<f64>::from_fn(8, 5, |_, _| rng.gen_range(-1.0..1.0));
        let set = ImageSetMatrix::new(features.clone(), 0);
        let basis = set_to_subspace(&set, 3).unwrap();
        let autocorr = features.matmul_t(&features);
        let eig = sym_eig_desc(&autocorr).unwrap();
        for k in 0..3 {
            let v = basis.matrix().column(k);
            let av = autocorr.mat_vec(&v);
            for j in 0..8 {
                assert!((av[j] - eig.values[k] * v[j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rank_deficient_set_is_reported() {
        let set = unit_set(&[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], 0);
        let err = set_to_subspace(&set, 2).unwrap_err();
        assert!(matches!(
            err,
            DataError::RankDeficientSet { rank: 1, needed: 2 }
        ));
    }

    #[test]
    fn single_unit_vector_gives_rank_one_projector() {
        let set = unit_set(&[[0.0, 1.0, 0.0]], 0);
        let ac = set_to_autocorr(&set, false).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == 1 && j == 1 { 1.0 } else { 0.0 };
                assert!((ac[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn orthonormal_set_autocorr_equals_projector() {
        let set = unit_set(&[[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], 0);
        let ac = set_to_autocorr(&set, true).unwrap();
        let basis = set_to_subspace(&set, 2).unwrap();
        let projector = basis.matrix().matmul_t(basis.matrix());
        assert!(ac.sub(&projector).frob_norm() < 1e-12);
    }

    #[test]
    fn normalized_autocorr_trace_is_set_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(251);
        let features = DenseMatrix::<f64>::from_fn(6, 9, |_, _| rng.gen_range(-2.0..2.0));
        let set = ImageSetMatrix::new(features, 1);
        let ac = set_to_autocorr(&set, true).unwrap();
        assert!((ac.trace() - 9.0).abs() < 1e-12);
        assert!(ac.sub(&ac.transpose()).frob_norm() < 1e-12);
    }

    #[test]
    fn zero_column_fails_normalization() {
        let set = unit_set(&[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]], 0);
        let err = set_to_autocorr(&set, true).unwrap_err();
        assert!(matches!(err, DataError::DegenerateColumn { column: 1 }));
    }

    #[test]
    fn pca_basis_maximizes_captured_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(257);
        let features = DenseMatrix::from_fn(7, 6, |_, _| rng.gen_range(-1.0..1.0));
        let set = ImageSetMatrix::new(features.clone(), 0);
        let ac = features.matmul_t(&features);
        let energy = |basis: &OrthonormalBasis<f64>| {
            basis.matrix().t_matmul(&ac.matmul(basis.matrix())).trace()
        };
        let pca = set_to_subspace(&set, 3).unwrap();
        let best = energy(&pca);
        for _ in 0..20 {
            let competitor = OrthonormalBasis::random(7, 3, &mut rng);
            assert!(best >= energy(&competitor) - 1e-10);
        }
    }

    #[test]
    fn synthetic_generation_is_deterministic() {
        let spec = SynthSpec {
            d: 8,
            classes: 3,
            sets_per_class: 10,
            n: 6,
            true_dim: 2,
            sigma: 0.1,
            seed: 42,
        };
        let (train_a, test_a) = generate_synthetic::<f64>(&spec).unwrap();
        let (train_b, test_b) = generate_synthetic::<f64>(&spec).unwrap();
        assert_eq!(train_a, train_b);
        assert_eq!(test_a, test_b);
        assert_eq!(train_a.len(), 24);
        assert_eq!(test_a.len(), 6);
        assert_eq!(train_a.class_sizes(), vec![8, 8, 8]);
    }

    #[test]
    fn noiseless_sets_recover_the_true_subspace() {
        let spec = SynthSpec {
            d: 10,
            classes: 2,
            sets_per_class: 5,
            n: 6,
            true_dim: 3,
            sigma: 0.0,
            seed: 9,
        };
        let (train, _, bases) = generate_synthetic_with_bases::<f64>(&spec).unwrap();
        for set in train.sets() {
            let extracted = set_to_subspace(set, 3).unwrap();
            let sim = span_similarity(&extracted, &bases[set.label()]).unwrap();
            assert!((sim - 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn noiseless_two_class_task_is_separable() {
        let spec = SynthSpec {
            d: 12,
            classes: 2,
            sets_per_class: 6,
            n: 4,
            true_dim: 2,
            sigma: 0.0,
            seed: 11,
        };
        let (_, test, bases) = generate_synthetic_with_bases::<f64>(&spec).unwrap();
        for set in test.sets() {
            let extracted = set_to_subspace(set, 2).unwrap();
            let mut best = (0, f64::NEG_INFINITY);
            for (c, basis) in bases.iter().enumerate() {
                let sim = span_similarity(&extracted, basis).unwrap();
                if sim > best.1 {
                    best = (c, sim);
                }
            }
            assert_eq!(best.0, set.label());
        }
    }

    #[test]
    fn vector_task_is_deterministic_and_normalized() {
        let spec = VectorSynthSpec {
            d: 10,
            classes: 3,
            samples_per_class: 40,
            true_dim: 2,
            sigma: 0.4,
            seed: 7,
            normalize: true,
        };
        let (train_a, test_a) = generate_synthetic_vectors::<f64>(&spec).unwrap();
        let (train_b, _) = generate_synthetic_vectors::<f64>(&spec).unwrap();
        assert_eq!(train_a.len(), 96);
        assert_eq!(test_a.len(), 24);
        for (a, b) in train_a.iter().zip(&train_b) {
            assert_eq!(a.features(), b.features());
            assert_eq!(a.label(), b.label());
        }
        for sample in &train_a {
            let norm: f64 = sample.features().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn prepare_inputs_produces_expected_shapes() {
        let spec = SynthSpec {
            d: 8,
            classes: 2,
            sets_per_class: 4,
            n: 5,
            true_dim: 2,
            sigma: 0.05,
            seed: 13,
        };
        let (train, _) = generate_synthetic::<f64>(&spec).unwrap();
        let pca = prepare_inputs(&train, InputMode::Pca { m: 2 }).unwrap();
        assert_eq!(pca.len(), train.len());
        for input in pca.inputs() {
            assert!(matches!(input, SetInput::Basis(m) if m.shape() == (8, 2)));
        }
        let ac = prepare_inputs(&train, InputMode::Ac { normalized: true }).unwrap();
        for input in ac.inputs() {
            assert!(matches!(input, SetInput::Autocorr(m) if m.shape() == (8, 8)));
        }
        assert_eq!(pca.labels(), ac.labels());
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            d: 7,
            classes: 3,
            sets_per_class: 20,
            n: 4,
            true_dim: 2,
            sigma: 0.3,
            seed: 17,
        };
        let (train, _) = generate_synthetic::<f64>(&spec).unwrap();
        assert_eq!(train.len(), 48);
        let manifest = save_dataset(&train, dir.path()).unwrap();
        let loaded = load_dataset::<f64>(&manifest).unwrap();
        assert_eq!(train, loaded);

        let single = Dataset::new(
            vec![ImageSetMatrix::new(
                DenseMatrix::new(2, 1, vec![0.1, -0.25]).unwrap(),
                1,
            )],
            2,
        )
        .unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let manifest2 = save_dataset(&single, dir2.path()).unwrap();
        assert_eq!(load_dataset::<f64>(&manifest2).unwrap(), single);
    }

    #[test]
    fn load_rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.tsv");

        std::fs::write(&manifest, "").unwrap();
        assert!(matches!(
            load_dataset::<f64>(&manifest).unwrap_err(),
            DataError::EmptyManifest { .. }
        ));

        std::fs::write(&manifest, "missing.txt\t0\n").unwrap();
        assert!(matches!(
            load_dataset::<f64>(&manifest).unwrap_err(),
            DataError::MissingFile {
                manifest_line: 1,
                ..
            }
        ));

        std::fs::write(&manifest, "bad.txt\t0\nok.txt\t1\n").unwrap();
        std::fs::write(dir.path().join("bad.txt"), "2\n1.0 2.0\n").unwrap();
        let err = load_dataset::<f64>(&manifest).unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 1, .. }), "{err}");

        std::fs::write(dir.path().join("bad.txt"), "2 1\n1.0 2.0\n").unwrap();
        std::fs::write(dir.path().join("ok.txt"), "3 1\n1.0 2.0 3.0\n").unwrap();
        let err = load_dataset::<f64>(&manifest).unwrap_err();
        assert!(matches!(
            err,
            DataError::InconsistentAmbient {
                expected: 2,
                found: 3,
                ..
            }
        ));

        std::fs::write(dir.path().join("ok.txt"), "2 1\n1.0 oops\n").unwrap();
        let err = load_dataset::<f64>(&manifest).unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 2, .. }));
    }

    #[test]
    fn dataset_construction_validates_labels_and_dims() {
        let set =
            |d: usize, label: usize| ImageSetMatrix::new(DenseMatrix::<f64>::identity(d), label);
        assert!(matches!(
            Dataset::<f64>::new(vec![], 2).unwrap_err(),
            DataError::EmptyDataset
        ));
        assert!(matches!(
            Dataset::new(vec![set(3, 0)], 1).unwrap_err(),
            DataError::TooFewClasses { count: 1 }
        ));
        assert!(matches!(
            Dataset::new(vec![set(3, 2)], 2).unwrap_err(),
            DataError::LabelOutOfRange { label: 2, count: 2 }
        ));
        assert!(matches!(
            Dataset::new(vec![set(3, 0), set(4, 1)], 2).unwrap_err(),
            DataError::AmbientMismatch {
                index: 1,
                expected: 3,
                found: 4
            }
        ));
    }
}
