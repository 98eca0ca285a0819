//! Resumable sequential execution of a sweep.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, HashSet};
use std::fs::OpenOptions;
use std::path::Path;

use super::record::{append_record, read_records, run_id, RunStatus};
use super::SweepSpace;
use crate::error::{Error, Result};
use crate::rng::mix64;
use crate::synth::{build_dataset, build_reference_set, ChannelMode, DataSource, Dataset, ReferenceSet};
use crate::trainer::{train_run, RunOptions};

/// Datasets up to this many encoded bytes are kept in memory.
const MATERIALIZE_LIMIT_BYTES: usize = 512 << 20;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepOptions {
    /// Skip points whose run id is already in the output file.
    pub resume: bool,
    /// Stop after training this many runs in this invocation.
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepSummary {
    pub total: usize,
    pub ok: usize,
    pub diverged: usize,
    pub skipped: usize,
    /// Points left untrained because the run limit was reached.
    pub remaining: usize,
}

impl SweepSummary {
    pub fn trained(&self) -> usize {
        self.ok + self.diverged
    }
}

/// Train every point of `space`, appending one record per run to `out`.
///
/// Run `i` uses seed `mix64(space.seed, i)`; datasets and reference sets
/// depend only on the master seed and are shared by runs with the same
/// size and channel mode. Without `resume` a non-empty output file is
/// refused; with it, records already present are never recomputed.
pub fn run_sweep(space: &SweepSpace, out: &Path, opts: &SweepOptions) -> Result<SweepSummary> {
    space.validate()?;
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .map_err(|e| Error::io(out, e))?;
    let len = file.metadata().map_err(|e| Error::io(out, e))?.len();
    let existing: HashSet<String> = if len == 0 {
        HashSet::new()
    } else if opts.resume {
        read_records(out)?.into_iter().map(|r| r.run_id).collect()
    } else {
        return Err(Error::Spec(format!(
            "{} already holds records; resume to continue it or choose a new file",
            out.display()
        )));
    };

    let points = space.points();
    let settings = &space.settings;
    let mut summary = SweepSummary {
        total: points.len(),
        ..Default::default()
    };
    let mut datasets: HashMap<(usize, ChannelMode), Dataset> = HashMap::new();
    let mut refsets: HashMap<ChannelMode, ReferenceSet> = HashMap::new();
    for (i, hp) in points.iter().enumerate() {
        let seed = mix64(space.seed, i as u64);
        let id = run_id(hp, seed);
        if existing.contains(&id) {
            summary.skipped += 1;
            continue;
        }
        if opts.limit.is_some_and(|l| summary.trained() >= l) {
            summary.remaining += 1;
            continue;
        }
        let key = (hp.dataset_size, hp.channel_mode);
        if let Entry::Vacant(slot) = datasets.entry(key) {
            let d = build_dataset(
                hp.dataset_size,
                settings.coherent_fraction,
                &settings.patch,
                hp.channel_mode,
                space.seed,
            )?;
            let bytes = d.len() * d.item_len() * std::mem::size_of::<f32>();
            slot.insert(if bytes <= MATERIALIZE_LIMIT_BYTES {
                d.materialize()?
            } else {
                d
            });
        }
        if let Entry::Vacant(slot) = refsets.entry(hp.channel_mode) {
            slot.insert(build_reference_set(&settings.patch, hp.channel_mode, space.seed)?);
        }
        let run_opts = RunOptions {
            seed,
            momentum: settings.momentum,
            base_filters: settings.base_filters,
            checkpoint_dir: None,
        };
        log::info!("run {}/{} ({id}): {hp:?}", i + 1, points.len());
        let record = train_run(hp, &datasets[&key], &refsets[&hp.channel_mode], &run_opts)?;
        append_record(&mut file, out, &record)?;
        match record.status {
            RunStatus::Ok => summary.ok += 1,
            RunStatus::Diverged => summary.diverged += 1,
        }
    }
    Ok(summary)
}
