//! Multi-fidelity hierarchical neural processes.

pub mod aggregation;
pub mod datasets;
pub mod epi;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod kv;
pub mod np;
pub mod numerics;
pub mod scalar;
pub mod seeds;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default double-precision instantiations.
pub type Tensor = numerics::Tensor<f64>;
pub type Tape = numerics::Tape<f64>;
pub type Mlp = numerics::Mlp<f64>;
pub type AdamState = numerics::AdamState<f64>;
pub type Checkpoint = numerics::Checkpoint<f64>;
pub type DiagGaussian = gaussian::DiagGaussian<f64>;
pub type Point = np::Point<f64>;
pub type ContextTargetBatch = np::ContextTargetBatch<f64>;
pub type LatentNoise = np::LatentNoise<f64>;
pub type MfhnpModel = np::MfhnpModel<f64>;
