//! The neural-process family: SF-NP, MF-NP and the hierarchical MF-HNP variants.

mod batch;
mod config;
mod elbo;
mod forward;
mod model;
mod predict;

pub use batch::{ContextTargetBatch, Fidelity, Point};
pub use config::{NpConfig, Variant};
pub use elbo::{elbo_mfhnp, elbo_mfnp, elbo_sfnp, loss_and_gradient, model_elbo, ElboBreakdown, LatentNoise, LevelWeights};
pub use model::{LevelNetworks, MfhnpModel};
pub use predict::{decode, encode_high, encode_low, predict, Query};
