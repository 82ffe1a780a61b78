//! Training, evaluation and experiment configuration.

mod config;
mod data;
mod eval;
mod train;

pub use config::{config_digest, ExperimentConfig, TrainConfig};
pub use data::{from_model_space, to_model_space, TaskData};
pub use eval::{evaluate, evaluate_ids, predict_scenarios, scenario_metrics, EvalReport, ScenarioScore};
pub use train::{init_model, train, EpochRecord, TrainHistory, TrainOutcome};
