//! CSV exports for plotting: per-run summaries for parallel coordinates,
//! throughput maps, and per-epoch reference-probability matrices.
//!
//! Floats are written in shortest round-trip form, so every export parses
//! back to the exact source values and re-serializes byte-identically.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::{check_ranges, ExpectedRangeSpec};
use crate::sweep::RunRecord;
use crate::synth::{ChannelMode, PatchSpec};
use crate::trainer::{measure_throughput, model_throughput, ScalingCostModel};

pub const PARALLEL_COORDS_HEADER: [&str; 13] = [
    "run_id",
    "backend_label",
    "workers",
    "channel_mode",
    "batch",
    "dataset_size",
    "depth",
    "bottleneck",
    "lr",
    "epochs",
    "final_loss",
    "best_distance",
    "pass",
];
pub const THROUGHPUT_HEADER: [&str; 5] = ["workers", "dataset_size", "batch", "samples_per_sec", "source"];
pub const PROB_MATRIX_HEADER: [&str; 10] = [
    "model_index",
    "run_id",
    "depth",
    "lr",
    "epoch",
    "p_white_noise",
    "p_coherent",
    "p_noncoherent",
    "p_saturated",
    "pass",
];

fn write_csv<R: Serialize>(header: &[&str], rows: &[R]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(format!("csv output is not UTF-8: {e}")))
}

fn read_csv<R: DeserializeOwned>(header: &[&str], text: &str) -> Result<Vec<R>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != header {
        return Err(Error::Parse {
            location: "line 1".into(),
            message: format!("expected header {}, found {}", header.join(","), got.join(",")),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                location: format!("line {}", i + 2),
                message: e.to_string(),
            })
        })
        .collect()
}

/// One run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelRow {
    pub run_id: String,
    pub backend_label: String,
    pub workers: usize,
    pub channel_mode: ChannelMode,
    pub batch: usize,
    pub dataset_size: usize,
    pub depth: usize,
    pub bottleneck: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Loss of the last completed epoch; empty if none completed.
    pub final_loss: Option<f64>,
    /// Smallest range distance among the run's passing epochs; empty if none pass.
    pub best_distance: Option<f64>,
    /// Whether any epoch passes the range gate.
    pub pass: bool,
}

pub fn parallel_rows(records: &[RunRecord], spec: &ExpectedRangeSpec) -> Vec<ParallelRow> {
    records
        .iter()
        .map(|r| {
            let best = r
                .epochs
                .iter()
                .map(|e| check_ranges(&e.ref_probs, spec))
                .filter(|rep| rep.pass)
                .map(|rep| rep.distance)
                .min_by(f64::total_cmp);
            let hp = &r.hp;
            ParallelRow {
                run_id: r.run_id.clone(),
                backend_label: hp.backend_label.clone(),
                workers: hp.workers,
                channel_mode: hp.channel_mode,
                batch: hp.batch,
                dataset_size: hp.dataset_size,
                depth: hp.depth,
                bottleneck: hp.bottleneck,
                lr: hp.lr,
                epochs: hp.epochs,
                final_loss: r.epochs.last().map(|e| e.loss),
                best_distance: best,
                pass: best.is_some(),
            }
        })
        .collect()
}

pub fn write_parallel_coords(rows: &[ParallelRow]) -> Result<String> {
    write_csv(&PARALLEL_COORDS_HEADER, rows)
}

pub fn parse_parallel_coords(text: &str) -> Result<Vec<ParallelRow>> {
    read_csv(&PARALLEL_COORDS_HEADER, text)
}

/// One row per run, in record order.
pub fn export_parallel_coords(records: &[RunRecord], spec: &ExpectedRangeSpec) -> Result<String> {
    write_parallel_coords(&parallel_rows(records, spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Measured,
    Modeled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputCell {
    pub workers: usize,
    pub dataset_size: usize,
    pub batch: usize,
    pub samples_per_sec: f64,
    pub source: Source,
}

/// Axes of a throughput map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThroughputGrid {
    pub workers: Vec<usize>,
    pub dataset_size: Vec<usize>,
    pub batch: Vec<usize>,
}

impl ThroughputGrid {
    /// `(dataset_size, batch, workers)` triples, dataset size slowest.
    pub fn cells(&self) -> Result<Vec<(usize, usize, usize)>> {
        if self.workers.is_empty() || self.dataset_size.is_empty() || self.batch.is_empty() {
            return Err(Error::Spec("throughput grid has an empty axis".into()));
        }
        let mut out = Vec::new();
        for &n in &self.dataset_size {
            for &b in &self.batch {
                for &w in &self.workers {
                    if w == 0 || b < w || n < b {
                        return Err(Error::Spec(format!(
                            "grid cell needs N ≥ batch ≥ W ≥ 1, got N={n}, batch={b}, W={w}"
                        )));
                    }
                    out.push((n, b, w));
                }
            }
        }
        Ok(out)
    }
}

pub fn modeled_map(model: &ScalingCostModel, grid: &ThroughputGrid) -> Result<Vec<ThroughputCell>> {
    grid.cells()?
        .into_iter()
        .map(|(n, b, w)| {
            Ok(ThroughputCell {
                workers: w,
                dataset_size: n,
                batch: b,
                samples_per_sec: model_throughput(model, w, n, b)?,
                source: Source::Modeled,
            })
        })
        .collect()
}

/// Settings for measured throughput maps.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSettings {
    pub depth: usize,
    pub mode: ChannelMode,
    pub patch: PatchSpec,
    pub base_filters: usize,
    pub seed: u64,
}

pub fn measured_map(grid: &ThroughputGrid, s: &MeasureSettings) -> Result<Vec<ThroughputCell>> {
    grid.cells()?
        .into_iter()
        .map(|(n, b, w)| {
            Ok(ThroughputCell {
                workers: w,
                dataset_size: n,
                batch: b,
                samples_per_sec: measure_throughput(w, n, b, s.depth, s.mode, &s.patch, s.base_filters, s.seed)?,
                source: Source::Measured,
            })
        })
        .collect()
}

pub fn export_throughput_map(cells: &[ThroughputCell]) -> Result<String> {
    write_csv(&THROUGHPUT_HEADER, cells)
}

pub fn parse_throughput_map(text: &str) -> Result<Vec<ThroughputCell>> {
    read_csv(&THROUGHPUT_HEADER, text)
}

/// Throughput-maximizing worker count at `(n, batch)`; ties go to fewer workers.
pub fn best_workers_in(cells: &[ThroughputCell], n: usize, batch: usize) -> Option<usize> {
    cells
        .iter()
        .filter(|c| c.dataset_size == n && c.batch == batch)
        .fold(None, |best: Option<&ThroughputCell>, c| match best {
            Some(b) if b.samples_per_sec >= c.samples_per_sec => Some(b),
            _ => Some(c),
        })
        .map(|c| c.workers)
}

/// One (model, epoch) entry of the probability matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbRow {
    pub model_index: usize,
    pub run_id: String,
    pub depth: usize,
    pub lr: f64,
    pub epoch: usize,
    pub p_white_noise: f64,
    pub p_coherent: f64,
    pub p_noncoherent: f64,
    pub p_saturated: f64,
    pub pass: bool,
}

/// Runs ordered by depth, then learning rate (record order breaks ties),
/// each contributing one row per completed epoch.
pub fn prob_rows(records: &[RunRecord], spec: &ExpectedRangeSpec) -> Vec<ProbRow> {
    let mut order: Vec<&RunRecord> = records.iter().collect();
    order.sort_by(|a, b| a.hp.depth.cmp(&b.hp.depth).then(a.hp.lr.total_cmp(&b.hp.lr)));
    order
        .iter()
        .enumerate()
        .flat_map(|(idx, r)| {
            r.epochs.iter().map(move |e| {
                let p = e.ref_probs;
                ProbRow {
                    model_index: idx,
                    run_id: r.run_id.clone(),
                    depth: r.hp.depth,
                    lr: r.hp.lr,
                    epoch: e.epoch,
                    p_white_noise: p.white_noise,
                    p_coherent: p.coherent,
                    p_noncoherent: p.noncoherent,
                    p_saturated: p.saturated,
                    pass: check_ranges(&p, spec).pass,
                }
            })
        })
        .collect()
}

pub fn write_prob_matrix(rows: &[ProbRow]) -> Result<String> {
    write_csv(&PROB_MATRIX_HEADER, rows)
}

pub fn parse_prob_matrix(text: &str) -> Result<Vec<ProbRow>> {
    read_csv(&PROB_MATRIX_HEADER, text)
}

pub fn export_prob_matrix(records: &[RunRecord], spec: &ExpectedRangeSpec) -> Result<String> {
    write_prob_matrix(&prob_rows(records, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::{run_id, HyperParams, RunStatus};
    use crate::trainer::{EpochStats, RefProbs};

    fn rec(depth: usize, lr: f64, probs: &[[f64; 4]]) -> RunRecord {
        let hp = HyperParams {
            backend_label: "cpu".into(),
            workers: 4,
            channel_mode: ChannelMode::Rgb,
            batch: 256,
            dataset_size: 5000,
            depth,
            bottleneck: 2,
            lr,
            epochs: probs.len().max(1),
        };
        RunRecord {
            run_id: run_id(&hp, 3),
            hp,
            seed: 3,
            param_count: 99,
            status: if probs.is_empty() {
                RunStatus::Diverged
            } else {
                RunStatus::Ok
            },
            epochs: probs
                .iter()
                .enumerate()
                .map(|(i, p)| EpochStats {
                    epoch: i + 1,
                    loss: 1.0 / (i as f64 + 3.0),
                    samples_per_sec: 123.456,
                    wall_time_s: 0.1,
                    ref_probs: RefProbs::from_array(*p),
                })
                .collect(),
        }
    }

    const PASS: [f64; 4] = [0.0657, 0.9008, 0.8551, 0.2975];
    const NEAR: [f64; 4] = [0.05, 0.95, 0.8, 0.26];

    fn records() -> Vec<RunRecord> {
        vec![
            rec(14, 0.5, &[[0.5; 4], PASS]),
            rec(2, 0.01, &[NEAR, [0.5; 4]]),
            rec(2, 0.001, &[[0.5; 4]]),
            rec(32, 0.1, &[]),
        ]
    }

    #[test]
    fn parallel_coords_shape_and_round_trip() {
        let spec = ExpectedRangeSpec::default();
        let text = export_parallel_coords(&records(), &spec).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().next().unwrap(), PARALLEL_COORDS_HEADER.join(","));
        let rows = parse_parallel_coords(&text).unwrap();
        assert_eq!(rows, parallel_rows(&records(), &spec));
        assert_eq!(write_parallel_coords(&rows).unwrap(), text);
        assert_eq!(rows[3].final_loss, None);
        assert!(!rows[3].pass);
    }

    #[test]
    fn best_run_has_minimum_distance() {
        let spec = ExpectedRangeSpec::default();
        let rows = parallel_rows(&records(), &spec);
        let best = crate::selection::rank_models(&records(), &spec).candidates[0].clone();
        let row = rows.iter().find(|r| r.run_id == best.run_id).unwrap();
        assert!(row.pass);
        let min = rows
            .iter()
            .filter_map(|r| r.best_distance)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(row.best_distance, Some(min));
        assert_eq!(min, best.report.distance);
    }

    #[test]
    fn empty_records_give_header_only() {
        let text = export_parallel_coords(&[], &ExpectedRangeSpec::default()).unwrap();
        assert_eq!(text, PARALLEL_COORDS_HEADER.join(",") + "\n");
        assert!(parse_parallel_coords(&text).unwrap().is_empty());
    }

    #[test]
    fn modeled_map_counts_and_crossover() {
        let grid = ThroughputGrid {
            workers: vec![1, 2, 4, 8, 16, 32],
            dataset_size: vec![1000, 50000],
            batch: vec![128, 512],
        };
        let cells = modeled_map(&ScalingCostModel::default(), &grid).unwrap();
        assert_eq!(cells.len(), 24);
        let text = export_throughput_map(&cells).unwrap();
        assert_eq!(text.lines().count(), 25);
        let back = parse_throughput_map(&text).unwrap();
        assert_eq!(back, cells);
        assert_eq!(export_throughput_map(&back).unwrap(), text);
        let small = best_workers_in(&back, 1000, 128).unwrap();
        let large = best_workers_in(&back, 50000, 512).unwrap();
        assert!(small < large, "{small} vs {large}");
    }

    #[test]
    fn invalid_grid() {
        let grid = ThroughputGrid {
            workers: vec![64],
            dataset_size: vec![1000],
            batch: vec![32],
        };
        assert!(matches!(
            modeled_map(&ScalingCostModel::default(), &grid),
            Err(Error::Spec(_))
        ));
        let grid = ThroughputGrid {
            workers: vec![],
            dataset_size: vec![1000],
            batch: vec![128],
        };
        assert!(grid.cells().is_err());
    }

    #[test]
    fn prob_matrix_order_and_pass() {
        let spec = ExpectedRangeSpec::default();
        let recs = records();
        let rows = prob_rows(&recs, &spec);
        assert_eq!(rows.len(), 5);
        let text = write_prob_matrix(&rows).unwrap();
        assert_eq!(
            text.lines().count(),
            1 + recs.iter().map(|r| r.epochs.len()).sum::<usize>()
        );
        let first = &rows[0];
        assert_eq!((first.model_index, first.depth, first.lr), (0, 2, 0.001));
        let idx: Vec<(usize, usize)> = rows.iter().map(|r| (r.model_index, r.epoch)).collect();
        assert_eq!(idx, vec![(0, 1), (1, 1), (1, 2), (2, 1), (2, 2)]);
        for r in &rows {
            let p = RefProbs::from_array([r.p_white_noise, r.p_coherent, r.p_noncoherent, r.p_saturated]);
            assert_eq!(r.pass, check_ranges(&p, &spec).pass);
        }
        let back = parse_prob_matrix(&text).unwrap();
        assert_eq!(back, rows);
        assert_eq!(write_prob_matrix(&back).unwrap(), text);
    }

    #[test]
    fn wrong_header_is_rejected() {
        match parse_prob_matrix("a,b\n1,2\n") {
            Err(Error::Parse { location, .. }) => assert_eq!(location, "line 1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exports_are_deterministic() {
        let spec = ExpectedRangeSpec::default();
        assert_eq!(
            export_prob_matrix(&records(), &spec).unwrap(),
            export_prob_matrix(&records(), &spec).unwrap()
        );
    }
}
