//! Device-independent randomness certification from Bell-test statistics.

pub mod bell;
pub mod certificate;
pub mod datasets;
pub mod error;
pub mod pipeline;
pub mod programs;
pub mod quantum;
pub mod relaxation;
pub mod solver;

pub use error::{Error, Result};
