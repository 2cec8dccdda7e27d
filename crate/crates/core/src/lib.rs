//! Memory-efficient optimizer kernels for training with low-rank gradient
//! projection and an inverse empirical-Fisher preconditioner.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is pure
//! computation over dense row-major [`Matrix`] values:
//!
//! * [`linalg`] holds the dense kernels (products, compact SVD by subspace
//!   iteration, Cholesky factorization and triangular solves).
//! * [`projector`] keeps the per-parameter low-rank subspace.
//! * [`natgrad`] applies `(λI + GGᵀ)⁻¹` to a projected gradient through the
//!   Woodbury identity, with `G` a short window of past projected gradients.
//! * [`adam`] is the moment machinery that consumes the transformed gradient.
//! * [`optimizer`] wires the pieces into a drop-in stepping optimizer with
//!   `adam`, `galore` and `natural-galore` modes, and [`memory`] reports the
//!   element counts each mode keeps alive.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod adam;
mod error;
pub mod linalg;
pub mod memory;
pub mod natgrad;
pub mod optimizer;
pub mod projector;

pub use adam::{AdamConfig, AdamState, EpsPlacement};
pub use error::{Error, Result};
pub use linalg::{CholeskyFactor, CompactSvd, Matrix};
pub use memory::{MemoryReport, SlotMemory};
pub use natgrad::GradHistory;
pub use optimizer::{Mode, Optimizer, OptimizerConfig, ParamSlot, SlotConfig};
pub use projector::{Projector, Side};
