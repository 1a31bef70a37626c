//! Positive-unlabeled learning with debiased contrastive pretraining.
//!
//! The crate carries its own small reverse-mode autodiff engine ([`Tape`]),
//! the PU and contrastive losses, dataset synthesis, models with JSON
//! checkpoints, training loops, metrics and executable property checks.

pub mod data;
pub mod digest;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod losses;
pub mod models;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use rng::{SeedStream, RNG_ALGORITHM};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
