//! Unsupervised distillation of a zero-shot vision-language teacher into a
//! linear probe on frozen embeddings, with the evaluation needed to judge it:
//! calibration, corruption robustness and out-of-distribution detection.
//!
//! The engine never runs an image encoder of its own except the synthetic
//! [`toyworld`] one. Real features arrive as `.lpce` stores (see
//! [`tensorio`]).

pub mod augment;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod probe;
pub mod rng;
pub mod tensorio;
pub mod toyworld;
pub mod zeroshot;

pub use error::{Error, Result};
pub use linalg::Matrix;
