//! Nine-axis hyperparameter grids and resumable sweeps over them.

mod record;
mod runner;
mod space;

pub use record::{append_record, parse_records, read_records, run_id, serialize_records, RunRecord, RunStatus};
pub use runner::{run_sweep, SweepOptions, SweepSummary};
pub use space::{
    enumerate, Axes, HyperParams, SweepSettings, SweepSpace, BATCH_RANGE, DEPTH_RANGE, LR_RANGE, WORKERS_MAX,
};

/// The shipped default sweep space document.
pub const DEFAULT_SPACE_JSON: &str = include_str!("../../config/default_space.json");
