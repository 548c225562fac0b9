//! Dataset files, training, evaluation and diagnostics for the
//! attention-memory dialog lab, plus the `amem` command line.

pub mod artifact;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod probe;
pub mod train;

pub use error::{LabError, LabResult};
