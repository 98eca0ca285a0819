//! Synchronous data-parallel training, throughput metering and the analytic
//! scaling model.

mod cost;
mod epoch;
mod reduce;
mod run;

pub use cost::{best_workers, describe_speedup, model_throughput, speedup, ScalingCostModel, SpeedupClass};
pub use epoch::{EpochStats, RefProbs, TrainConfig, Trainer};
pub use reduce::{pool_batch_stats, shard, shard_ranges, tree_reduce, tree_reduce_mean};
pub use run::{arch_for, measure_throughput, train_run, RunOptions};
