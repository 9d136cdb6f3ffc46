//! Self-explaining tabular predictors.
//!
//! A [`ShapNetwork`] maps an instance with `n` features to an `n x d` matrix
//! of attributions; the prediction for output `j` is the column sum of that
//! matrix (plus an optional learned bias) passed through a link function.
//! Training couples the usual prediction loss with a weighted least-squares
//! penalty over sampled feature coalitions so the attributions converge to
//! the Shapley values of the network's own masking game.
//!
//! The crate is `no_std` (with `alloc`). The `std` feature only switches the
//! matrix kernels to runtime CPU feature detection; IO, file formats and the
//! command-line front end live in the `selfshap` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod link;
pub mod math;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod rng;
pub mod shapley;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use link::Link;
pub use network::{AttributionMatrix, BackboneKind, NetworkSpec, ShapNetwork};
pub use tensor::Tensor;
