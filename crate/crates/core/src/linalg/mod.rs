//! Small dense linear algebra used by the synthesis and estimation code.
//!
//! Everything here targets matrices of a few hundred rows at most: the 4×4
//! Hamiltonian, 2×2 Riccati solutions and m×m autocorrelation Grams.

mod dense;
mod eigen;
mod fixed;
mod symmetric;

pub use dense::DMatrix;
pub use eigen::{eigenvalues, null_vector};
pub use fixed::Mat;
pub use symmetric::{cholesky, solve_lower, symmetric_eigen, symmetric_eigenvalues, SymmetricEigen};

pub use num_complex::Complex64;

/// Failure modes of the numerical kernels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(&'static str),
}
