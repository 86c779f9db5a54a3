//! Canonical-angle similarity between an input set and the reference bank,
//! in both matching modes, with the analytic gradients.

use crate::linalg::{sym_eig_desc, DenseMatrix};
use crate::manifold::OrthonormalBasis;
use crate::mutual::{MutualError, RefMode, ReferenceBank, SetInput, SimilarityVector};
use crate::scalar::Scalar;

/// Similarity of an orthonormal input basis against every reference.
///
/// Grassmann mode computes `s_j = tr(V_jᵀ X Xᵀ V_j)`, the sum of squared
/// canonical cosines. Euclidean mode regularizes non-orthonormal references
/// through `s_j = tr(Xᵀ V (VᵀV + εI)⁻¹ VᵀX)`.
pub fn similarity<T: Scalar>(
    x: &OrthonormalBasis<T>,
    bank: &ReferenceBank<T>,
) -> Result<SimilarityVector<T>, MutualError> {
    similarity_of(&SetInput::Basis(x.matrix().clone()), bank)
}

/// Similarity for either input representation (subspace basis or
/// autocorrelation matrix standing in for the projector).
pub fn similarity_of<T: Scalar>(
    input: &SetInput<T>,
    bank: &ReferenceBank<T>,
) -> Result<SimilarityVector<T>, MutualError> {
    check_input(input, bank)?;
    let s = bank
        .refs()
        .iter()
        .map(|v| single_similarity(input, v, bank))
        .collect::<Result<Vec<T>, _>>()?;
    let r_cap = match input {
        SetInput::Basis(x) => x.cols().min(bank.sub_dim()),
        SetInput::Autocorr(_) => bank.sub_dim(),
    };
    Ok(SimilarityVector { s, r_cap })
}

fn single_similarity<T: Scalar>(
    input: &SetInput<T>,
    v: &DenseMatrix<T>,
    bank: &ReferenceBank<T>,
) -> Result<T, MutualError> {
    match (bank.mode(), input) {
        (RefMode::Grassmann, SetInput::Basis(x)) => Ok(x.t_matmul(v).frob_norm().powi(2)),
        (RefMode::Grassmann, SetInput::Autocorr(a)) => {
            // tr(Vᵀ A V) as an elementwise sum against AV.
            Ok(dot_all(v, &a.matmul(v)))
        }
        (RefMode::Euclidean, SetInput::Basis(x)) => {
            let minv = regularized_gram_inverse(v, bank.epsilon())?;
            let b = v.t_matmul(x);
            Ok(dot_all(&b, &minv.matmul(&b)))
        }
        (RefMode::Euclidean, SetInput::Autocorr(a)) => {
            let minv = regularized_gram_inverse(v, bank.epsilon())?;
            let c = v.t_matmul(&a.matmul(v));
            Ok(minv.matmul(&c).trace())
        }
    }
}

/// Gradients of `Σ_j upstream_j · s_j` with respect to every reference and
/// the input.
///
/// Grassmann mode realizes the analytic forms `2ṡ_j XXᵀV_j` (references) and
/// `Σ_j 2ṡ_j V_jV_jᵀX` (input). Euclidean mode differentiates the regularized
/// pseudoinverse similarity exactly, product rule through `(VᵀV + εI)⁻¹`.
/// For autocorrelation inputs the input gradient is taken with respect to the
/// matrix A itself.
pub fn similarity_grad<T: Scalar>(
    input: &SetInput<T>,
    bank: &ReferenceBank<T>,
    upstream: &[T],
) -> Result<(Vec<DenseMatrix<T>>, DenseMatrix<T>), MutualError> {
    check_input(input, bank)?;
    if upstream.len() != bank.len() {
        return Err(MutualError::UpstreamMismatch {
            expected: bank.len(),
            found: upstream.len(),
        });
    }
    let two = T::cast(2.0);
    let mut ref_grads = Vec::with_capacity(bank.len());
    let mut input_grad = zero_input_grad(input);

    for (v, &sdot) in bank.refs().iter().zip(upstream) {
        match (bank.mode(), input) {
            (RefMode::Grassmann, SetInput::Basis(x)) => {
                let xtv = x.t_matmul(v);
                ref_grads.push(x.matmul(&xtv).scale(two * sdot));
                let vtx = v.t_matmul(x);
                input_grad.add_scaled_inplace(&v.matmul(&vtx), two * sdot);
            }
            (RefMode::Grassmann, SetInput::Autocorr(a)) => {
                ref_grads.push(a.matmul(v).scale(two * sdot));
                input_grad.add_scaled_inplace(&v.matmul_t(v), sdot);
            }
            (RefMode::Euclidean, SetInput::Basis(x)) => {
                let minv = regularized_gram_inverse(v, bank.epsilon())?;
                let b = v.t_matmul(x);
                let minv_b = minv.matmul(&b);
                // ds/dV = 2XBᵀM⁻¹ − 2VM⁻¹BBᵀM⁻¹ with B = VᵀX, M = VᵀV + εI.
                let term1 = x.matmul_t(&minv_b);
                let term2 = v.matmul(&minv_b.matmul_t(&minv_b));
                ref_grads.push(term1.sub(&term2).scale(two * sdot));
                input_grad.add_scaled_inplace(&v.matmul(&minv_b), two * sdot);
            }
            (RefMode::Euclidean, SetInput::Autocorr(a)) => {
                let minv = regularized_gram_inverse(v, bank.epsilon())?;
                let av = a.matmul(v);
                let av_minv = av.matmul(&minv);
                let inner = minv.matmul(&v.t_matmul(&av)).matmul(&minv);
                ref_grads.push(av_minv.sub(&v.matmul(&inner)).scale(two * sdot));
                input_grad.add_scaled_inplace(&v.matmul(&minv).matmul_t(v), sdot);
            }
        }
    }
    Ok((ref_grads, input_grad))
}

fn zero_input_grad<T: Scalar>(input: &SetInput<T>) -> DenseMatrix<T> {
    let (rows, cols) = input.matrix().shape();
    DenseMatrix::zeros(rows, cols)
}

fn check_input<T: Scalar>(input: &SetInput<T>, bank: &ReferenceBank<T>) -> Result<(), MutualError> {
    if input.ambient_dim() != bank.ambient_dim() {
        return Err(MutualError::AmbientMismatch {
            input: input.ambient_dim(),
            bank: bank.ambient_dim(),
        });
    }
    Ok(())
}

/// `(VᵀV + εI)⁻¹` through the symmetric eigendecomposition.
fn regularized_gram_inverse<T: Scalar>(
    v: &DenseMatrix<T>,
    epsilon: T,
) -> Result<DenseMatrix<T>, MutualError> {
    let mut m = v.t_matmul(v);
    for i in 0..m.rows() {
        m[(i, i)] += epsilon;
    }
    let eig = sym_eig_desc(&m)?;
    let smallest = *eig.values.last().expect("gram matrix is nonempty");
    if smallest <= T::zero() {
        return Err(MutualError::NonPositiveGram {
            value: smallest.as_f64(),
        });
    }
    let p = m.rows();
    let scaled = DenseMatrix::from_fn(p, p, |i, j| eig.vectors[(i, j)] / eig.values[j]);
    Ok(scaled.matmul_t(&eig.vectors))
}

/// Elementwise dot product of two equally shaped matrices.
fn dot_all<T: Scalar>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> T {
    debug_assert_eq!(a.shape(), b.shape());
    let mut acc = T::zero();
    for (x, y) in a.data().iter().zip(b.data()) {
        acc += *x * *y;
    }
    acc
}
