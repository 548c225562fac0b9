//! Attention-memory visual dialog laboratory: core algorithms.
//!
//! This crate is `no_std` (with `alloc`) when built without the default `std`
//! feature; enable `libm` in that case so the float math has a backend.
//!
//! * [`tensor`]: dense tensors, a reverse-mode differentiation graph, the
//!   neural building blocks (conv, pooling, LSTM, softmax) and Adam.
//! * [`dialog`]: grid worlds, the question grammar, the answer oracle and the
//!   procedural renderer.
//! * [`model`]: the attention-memory encoder/decoder and its ablations.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod dialog;
pub mod error;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
