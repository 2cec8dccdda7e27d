//! Dense kernels: products, compact SVD, Cholesky.

mod cholesky;
mod matrix;
pub mod svd;

pub use cholesky::{cholesky_factor, solve_cholesky, CholeskyFactor};
pub use matrix::{frobenius_norm, matmul, transpose, Matrix};
pub use svd::{compact_svd, CompactSvd};

