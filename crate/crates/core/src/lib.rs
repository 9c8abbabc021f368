//! Spatio-temporal variational autoencoders with label-free disentanglement metrics.
//!
//! The crate is pure computation: a small reverse-mode autodiff engine over `f64`
//! tensors, synthetic data generators with known factors, encoder/decoder
//! families for raster and graph sequences, training objectives, and estimators
//! for mutual information and total correlation of the aggregate posterior.

pub mod autograd;
mod conv;
pub mod gradcheck;
pub mod metrics;
pub mod objectives;
pub mod params;
pub mod rng;
pub mod stdata;
pub mod stnets;
pub mod tensor;

pub use autograd::{Gradients, Graph, Var};
pub use params::{Adam, AdamConfig, ParameterSet};
pub use tensor::Tensor;
