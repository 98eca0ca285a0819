//! Whole training runs and throughput measurement.

use std::path::PathBuf;

use super::epoch::{TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::resnet::{checkpoint_path, save_checkpoint, ArchSpec, Model};
use crate::sweep::{run_id, HyperParams, RunRecord, RunStatus};
use crate::synth::{build_dataset, build_reference_set, ChannelMode, DataSource, PatchSpec, ReferenceSet};

/// Settings of a run that are not sweep axes.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub momentum: f64,
    pub base_filters: usize,
    /// When set, the model is saved after every completed epoch.
    pub checkpoint_dir: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(seed: u64) -> Self {
        RunOptions {
            seed,
            momentum: 0.0,
            base_filters: 16,
            checkpoint_dir: None,
        }
    }
}

pub fn arch_for(hp: &HyperParams, base_filters: usize) -> Result<ArchSpec> {
    Ok(ArchSpec::new(hp.depth, hp.channel_mode.channels(), hp.bottleneck)?.with_base_filters(base_filters))
}

/// Train a fresh 32-bit model for `hp.epochs` epochs.
///
/// A numeric failure ends the run with status `diverged`, keeping the
/// epochs completed before it. Other errors are returned.
pub fn train_run<D: DataSource + ?Sized>(
    hp: &HyperParams,
    data: &D,
    refset: &ReferenceSet,
    opts: &RunOptions,
) -> Result<RunRecord> {
    hp.validate()?;
    if data.mode() != hp.channel_mode {
        return Err(Error::Shape(format!(
            "hyperparameters ask for {} images, dataset holds {}",
            hp.channel_mode,
            data.mode()
        )));
    }
    let model = Model::<f32>::build(arch_for(hp, opts.base_filters)?, opts.seed)?;
    let param_count = model.param_count();
    let cfg = TrainConfig {
        workers: hp.workers,
        batch: hp.batch,
        lr: hp.lr,
        momentum: opts.momentum,
        epochs: hp.epochs,
        seed: opts.seed,
    };
    let id = run_id(hp, opts.seed);
    let mut trainer = Trainer::new(model, cfg)?;
    let mut epochs = Vec::with_capacity(hp.epochs);
    let mut status = RunStatus::Ok;
    for _ in 0..hp.epochs {
        match trainer.train_epoch(data, refset) {
            Ok(stats) => {
                if let Some(dir) = &opts.checkpoint_dir {
                    save_checkpoint(&checkpoint_path(dir, &id, stats.epoch), &trainer.model, stats.epoch)?;
                }
                epochs.push(stats);
            }
            Err(Error::Numeric(msg)) => {
                log::warn!("run {id} diverged in epoch {}: {msg}", epochs.len() + 1);
                status = RunStatus::Diverged;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunRecord {
        run_id: id,
        hp: hp.clone(),
        seed: opts.seed,
        param_count,
        status,
        epochs,
    })
}

/// Measured samples/second of one training epoch (not counting data
/// synthesis) for a `depth`-layer model on `n` synthetic patches.
#[allow(clippy::too_many_arguments)]
pub fn measure_throughput(
    workers: usize,
    n: usize,
    batch: usize,
    depth: usize,
    mode: ChannelMode,
    spec: &PatchSpec,
    base_filters: usize,
    seed: u64,
) -> Result<f64> {
    let data = build_dataset(n, 0.5, spec, mode, seed)?.materialize()?;
    let refset = build_reference_set(spec, mode, seed)?;
    let arch = ArchSpec::new(depth, mode.channels(), 2)?.with_base_filters(base_filters);
    let cfg = TrainConfig {
        workers,
        batch,
        lr: 0.001,
        momentum: 0.0,
        epochs: 1,
        seed,
    };
    let mut trainer = Trainer::new(Model::<f32>::build(arch, seed)?, cfg)?;
    Ok(trainer.train_epoch(&data, &refset)?.samples_per_sec)
}
