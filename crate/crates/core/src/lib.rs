//! latefit-core: a calibrated late-interaction engine that scores project
//! briefs against freelancer profiles.
//!
//! Documents are segmented into utterances, embedded by a frozen backbone,
//! projected by trainable branches, and compared through bidirectional
//! multi-head cross-attention; pooled similarity statistics feed a small MLP
//! that emits a skill-fit score distilled from calibrated teacher scores.
//!
//! The numeric core is generic over the scalar type (see [`scalar::Real`]):
//! `f32` for training and storage, `f64` for gradient verification.

pub mod attention;
pub mod backbone;
pub mod cache;
pub mod checkpoint;
pub mod dataset;
pub mod document;
pub mod encoder;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod rubric;
pub mod sampler;
pub mod scalar;
pub mod scorer;
pub mod stats;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete aliases for the two supported scalar widths.
pub type ModelParams32 = model::ModelParams<f32>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type Gradients32 = model::Gradients<f32>;
pub type Gradients64 = model::Gradients<f64>;

/// Schema version stamped into every artifact this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
