//! Two-fidelity dataset containers, splits, storage and task generators.

mod dataset;
mod epi_task;
mod grid;
mod split;
mod store;
mod synth;

pub use dataset::{FidelityDataset, ScenarioId, ScenarioRecord};
pub use epi_task::epi_task;
pub use grid::{ingest_grid, Grid, Windowing};
pub use split::{make_split, Split, SplitMode, SplitSpec};
pub use store::{read_dataset, records_from_text, records_to_text, write_dataset, DirLock, StoredDataset, MANIFEST};
pub use synth::{synth_grid, synth_high_curve, synth_low_curve, synth_parameter, synth_task, SYNTH_HIGH_POINTS, SYNTH_LOW_POINTS};
