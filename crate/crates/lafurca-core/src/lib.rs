//! Core algorithms for dual-path BiLSTM two-source separation.
//!
//! This crate is `no_std`-compatible (it only needs `alloc`) and carries the
//! numeric heart of the toolkit:
//!
//! - a dense-tensor graph with reverse-mode automatic differentiation
//!   ([`graph`]),
//! - the learned encoder/decoder front-end ([`frontend`]),
//! - segmentation of feature sequences into overlapped chunk tensors and the
//!   inverse merge ([`chunking`]),
//! - dual-path BiLSTM blocks and their parallel/cross variants ([`blocks`]),
//! - the full separation network and the `LF(...)` model notation
//!   ([`network`]),
//! - the utterance-level SI-SDR objective with permutation-invariant
//!   training ([`objective`]),
//! - plain (non-differentiable) separation metrics ([`metrics`]),
//! - an STFT and the ideal-ratio-mask oracle ([`stft`]),
//! - the Adam update rule and gradient clipping ([`optim`]),
//! - finite-difference gradient verification ([`gradcheck`]).
//!
//! Everything is generic over the floating-point precision via [`Scalar`]:
//! gradient checks run in `f64`, training runs in `f32`.
//!
//! File I/O, dataset synthesis, the training loop and the command-line
//! interface live in the companion `lafurca` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod blocks;
pub mod chunking;
pub mod error;
pub mod frontend;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod network;
pub mod objective;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod stft;
pub mod tensor;

pub use error::CoreError;
pub use graph::{Grads, Graph, Var};
pub use params::{ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Crate-wide result type.
pub type Result<T> = core::result::Result<T, CoreError>;
