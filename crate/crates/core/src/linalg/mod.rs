//! Minimal dense linear algebra: matrices, symmetric eigendecomposition,
//! compact SVD, and orthonormalization.
//!
//! Everything operates on small dense matrices in 64-bit (or 32-bit) floats.
//! All functions are pure; values are immutable after construction.

mod eig;
mod matrix;
mod orth;
mod svd;

pub use eig::{sym_eig_desc, SymEig};
pub use matrix::DenseMatrix;
pub use orth::orthonormalize;
pub use svd::{compact_svd, CompactSvd};

/// Errors produced by the linear-algebra kernels.
#[derive(Debug, thiserror::Error)]
pub enum LinalgError {
    /// Entry count does not match the declared shape.
    #[error("{rows}x{cols} matrix needs {} entries, got {len}", rows * cols)]
    BadLength {
        rows: usize,
        cols: usize,
        len: usize,
    },
    /// Matrices must have at least one row and one column.
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    /// An entry is NaN or infinite.
    #[error("matrix entry ({row},{col}) is not finite")]
    NonFinite { row: usize, col: usize },
    /// A square matrix was required.
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    /// Symmetry check failed.
    #[error("matrix is not symmetric: max |A - A^T| = {delta:.3e}")]
    NotSymmetric { delta: f64 },
    /// A full-column-rank matrix was required.
    #[error("rank-deficient input: singular value {sigma:.3e} at index {index} is below {threshold:.3e}")]
    RankDeficient {
        index: usize,
        sigma: f64,
        threshold: f64,
    },
    /// Orthonormalization needs at least as many rows as columns.
    #[error("{op} requires cols <= rows, got {rows}x{cols}")]
    TooManyColumns {
        op: &'static str,
        rows: usize,
        cols: usize,
    },
    /// The Jacobi iteration hit its sweep limit.
    #[error("Jacobi iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}
