//! Age-stratified chain-binomial SIR simulation and scenario features.

mod coarsen;
mod family;
mod features;
mod scenario;
mod sim;

pub use coarsen::{coarsen, AgeBracketMap};
pub use family::ScenarioFamily;
pub use features::{defeaturize, feature_width, featurize, featurize_x, groups_for_width, targets};
pub use scenario::Scenario;
pub use sim::{beta_from_r0, next_generation_kernel, simulate, spectral_radius, step, EpiState, TrajectorySet};
