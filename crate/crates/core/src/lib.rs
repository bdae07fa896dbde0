//! Spiking-network context extraction pipeline.
//!
//! An unsupervised spiking network learns per-neuron conductance matrices
//! from images with frequency-dependent stochastic plasticity; a pre-processor
//! scores new images against those matrices and blends the best-matching
//! contexts back into the input to form templates; perturbation generators
//! and a small MLP backend measure how much more gracefully the template
//! pipeline degrades under input corruption than raw images do.

pub mod classify;
pub mod config;
pub mod context;
pub mod data;
pub mod error;
pub mod perturb;
pub mod plasticity;
pub mod rng;
pub mod snn;

pub use error::{Error, Result};
