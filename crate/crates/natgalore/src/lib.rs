//! Training harness, checkpoints, reports and command-line plumbing around
//! [`natgalore_core`].

pub mod autodiff;
pub mod checkpoint;
pub mod compare;
pub mod config;
mod error;
pub mod gradcheck;
pub mod memreport;
pub mod tasks;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
