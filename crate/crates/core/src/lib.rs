//! Multimodal Parkinson's-disease severity staging.
//!
//! Symptom-feature pruning and normalisation ([`tabular`]), MRI cross-section
//! preprocessing ([`imaging`]), a small from-scratch differentiable core
//! ([`nn`]), the symptoms / image / hybrid classifiers ([`models`]), training
//! and evaluation ([`training`]), and a seeded synthetic cohort ([`synth`]).

pub mod canonical;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod imaging;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tabular;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// 64-bit tensor, the unit of all model computation.
pub type Tensor = nn::Tensor<f64>;
/// 64-bit parameter with gradient and momentum buffers.
pub type Param = nn::Param<f64>;
/// 64-bit layer.
pub type Layer = nn::Layer<f64>;
/// 64-bit layer stack.
pub type Sequential = nn::Sequential<f64>;
