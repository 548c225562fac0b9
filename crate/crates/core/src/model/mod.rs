//! The attention-memory visual dialog model and its ablations.
//!
//! A [`Model`] owns configuration and parameters; a [`Session`] records one
//! forward pass on a differentiation graph.

mod config;
pub mod dpl;
mod forward;
mod params;

pub use config::{ModelConfig, Variant};
pub use forward::{AttentionMemory, DialogForward, DialogState, Model, Session, StepOutput};
pub use params::{HistoryIds, Layer, MemoryIds, ModelParams, ParamIds};
