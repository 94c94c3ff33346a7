//! Relation classification with an entity-aware attention BLSTM and latent
//! entity typing, with a small reverse-mode differentiation engine.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`).

pub mod check;
pub mod classifier;
pub mod config;
pub mod dataset;
pub mod embedding;
pub mod encoder;
pub mod entityattn;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod scalar;
pub mod selfattn;
pub mod trace;
pub mod trainer;

pub use config::ModelConfig;
pub use error::{Error, Result};
pub use model::Model;
pub use scalar::Scalar;

pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type Tensor64 = numerics::Tensor<f64>;
