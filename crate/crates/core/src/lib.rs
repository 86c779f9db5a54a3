//! Subspace classifiers built on canonical-angle matching.
//!
//! The crate implements the classical subspace-method family (SM, LSM, ALSM)
//! and the learned mutual-subspace models (LMSM and its Grassmannian variant)
//! together with the numerical kernels they need: dense eigendecomposition and
//! SVD, Grassmann-manifold geometry, Riemannian SGD, dataset plumbing, and a
//! finite-difference gradient auditor.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix `f64`, the precision every documented tolerance assumes.

pub mod classic;
pub mod data;
pub mod linalg;
pub mod manifold;
pub mod model;
pub mod mutual;
pub mod scalar;
pub mod train;

pub use scalar::Scalar;

/// Dense `f64` matrix.
pub type Matrix = linalg::DenseMatrix<f64>;
/// Symmetric eigendecomposition of an `f64` matrix.
pub type Eig = linalg::SymEig<f64>;
/// Compact SVD of an `f64` matrix.
pub type Svd = linalg::CompactSvd<f64>;
/// `f64` Grassmann-point representative.
pub type Basis = manifold::OrthonormalBasis<f64>;
/// `f64` horizontal tangent vector.
pub type Tangent = manifold::HorizontalVector<f64>;
/// `f64` reference-subspace bank.
pub type Bank = mutual::ReferenceBank<f64>;
/// `f64` head configuration.
pub type Head = mutual::HeadConfig<f64>;
