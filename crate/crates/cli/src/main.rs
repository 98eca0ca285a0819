use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use seisbench::report::{self, MeasureSettings, ThroughputCell, ThroughputGrid};
use seisbench::selection::{rank_models, ExpectedRangeSpec};
use seisbench::sweep::{append_record, read_records, run_sweep, HyperParams, SweepOptions, SweepSpace};
use seisbench::synth::{
    build_dataset, build_reference_set, gen_patch, normalize_patch, write_patch, ChannelMode, PatchSpec, SignalType,
};
use seisbench::trainer::{describe_speedup, model_throughput, speedup, train_run, RunOptions, ScalingCostModel};
use seisbench::{Error, Result};

const SEED_ENV: &str = "SEISBENCH_SEED";
const DEFAULT_SEED: u64 = 20240601;

#[derive(Parser)]
#[command(name = "seisbench", version, about = "Synthetic DAS patch classification benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one synthetic patch and write it in the binary patch format.
    Synth {
        #[arg(long, default_value = "coherent_waves")]
        kind: SignalType,
        #[arg(long, default_value_t = 64)]
        n_time: usize,
        #[arg(long, default_value_t = 64)]
        n_chan: usize,
        /// Normalize to [0, 1] before writing.
        #[arg(long)]
        normalize: bool,
        #[arg(long, env = SEED_ENV, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a single run and append its record.
    Train {
        #[arg(long, default_value = "cpu")]
        backend_label: String,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value = "grayscale")]
        channel_mode: ChannelMode,
        #[arg(long, default_value_t = 128)]
        batch: usize,
        #[arg(long, default_value_t = 1000)]
        dataset_size: usize,
        #[arg(long, default_value_t = 14)]
        depth: usize,
        #[arg(long, default_value_t = 2)]
        bottleneck: usize,
        #[arg(long, default_value_t = 0.001)]
        lr: f64,
        #[arg(long, default_value_t = 40)]
        epochs: usize,
        #[arg(long, default_value_t = 0.0)]
        momentum: f64,
        #[arg(long, default_value_t = 16)]
        base_filters: usize,
        #[arg(long, env = SEED_ENV, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Save a checkpoint after every epoch into this directory.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        /// JSONL file to append the run record to; printed to stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every point of a sweep space, appending records as they finish.
    Sweep {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip runs already recorded in the output file.
        #[arg(long)]
        resume: bool,
        /// Stop after training this many runs.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Rank per-epoch models by the expected-range gate.
    Validate {
        #[arg(long)]
        records: PathBuf,
        /// Range spec JSON; defaults to the built-in ranges.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Write a throughput map over a grid of workers, dataset sizes and batches.
    Bench {
        #[arg(long, value_enum)]
        mode: BenchMode,
        /// JSON: {"workers":[...],"dataset_size":[...],"batch":[...]}
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Cost-model constants JSON; defaults to the shipped constants.
        #[arg(long)]
        cost_model: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        #[arg(long, default_value = "grayscale")]
        channel_mode: ChannelMode,
        #[arg(long, default_value_t = 16)]
        base_filters: usize,
        #[arg(long, env = SEED_ENV, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Export plot-ready CSV from run records.
    Report {
        #[arg(value_enum)]
        kind: ReportKind,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchMode {
    Measured,
    Modeled,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    ParallelCoords,
    ThroughputMap,
    ProbMatrix,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 2,
        Error::Numeric(_) | Error::State(_) => 3,
        _ => 1,
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| Error::Validation {
            axis: SEED_ENV.into(),
            message: format!("{v:?} is not an unsigned integer"),
        }),
        Err(_) => Ok(None),
    }
}

fn load_spec(path: Option<&Path>) -> Result<ExpectedRangeSpec> {
    match path {
        Some(p) => ExpectedRangeSpec::from_json(&read_text(p)?),
        None => Ok(ExpectedRangeSpec::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            kind,
            n_time,
            n_chan,
            normalize,
            seed,
            out,
        } => {
            let spec = PatchSpec::new(n_time, n_chan)?;
            let mut patch = gen_patch(kind, &spec, seed)?;
            if normalize {
                patch = normalize_patch(&patch)?;
            }
            let file = fs::File::create(&out).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            write_patch(std::io::BufWriter::new(file), &patch).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            println!(
                "wrote {kind} patch {n_time}x{n_chan} (seed {seed}) to {}",
                out.display()
            );
        }
        Command::Train {
            backend_label,
            workers,
            channel_mode,
            batch,
            dataset_size,
            depth,
            bottleneck,
            lr,
            epochs,
            momentum,
            base_filters,
            seed,
            checkpoint_dir,
            out,
        } => {
            let hp = HyperParams {
                backend_label,
                workers,
                channel_mode,
                batch,
                dataset_size,
                depth,
                bottleneck,
                lr,
                epochs,
            };
            hp.validate()?;
            let patch = PatchSpec::default();
            let data = build_dataset(dataset_size, 0.5, &patch, channel_mode, seed)?.materialize()?;
            let refset = build_reference_set(&patch, channel_mode, seed)?;
            if let Some(dir) = &checkpoint_dir {
                fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
            }
            let opts = RunOptions {
                seed,
                momentum,
                base_filters,
                checkpoint_dir,
            };
            let record = train_run(&hp, &data, &refset, &opts)?;
            for e in &record.epochs {
                let p = e.ref_probs;
                println!(
                    "epoch {:>3}  loss {:.5}  {:>9.1} samples/s  p = [{:.4} {:.4} {:.4} {:.4}]",
                    e.epoch, e.loss, e.samples_per_sec, p.white_noise, p.coherent, p.noncoherent, p.saturated
                );
            }
            match out {
                Some(path) => {
                    let mut f = OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(&path)
                        .map_err(|e| Error::Io {
                            path: path.clone(),
                            source: e,
                        })?;
                    append_record(&mut f, &path, &record)?;
                }
                None => println!("{}", record.to_json_line()),
            }
            if record.status == seisbench::sweep::RunStatus::Diverged {
                return Err(Error::Numeric(format!(
                    "run {} diverged after {} epochs",
                    record.run_id,
                    record.epochs.len()
                )));
            }
        }
        Command::Sweep {
            space,
            out,
            resume,
            limit,
        } => {
            let mut space = SweepSpace::parse(&read_text(&space)?)?;
            if let Some(seed) = seed_from_env()? {
                space.seed = seed;
            }
            let s = run_sweep(&space, &out, &SweepOptions { resume, limit })?;
            println!(
                "{} points: {} trained ({} ok, {} diverged), {} skipped, {} remaining",
                s.total,
                s.trained(),
                s.ok,
                s.diverged,
                s.skipped,
                s.remaining
            );
        }
        Command::Validate { records, spec, top } => {
            let spec = load_spec(spec.as_deref())?;
            let records = read_records(&records)?;
            let ranking = rank_models(&records, &spec);
            println!(
                "{:<16} {:>5} {:>8} {:>8} {:>8} {:>8}  {:<7} {:>8}",
                "run_id", "epoch", "p_white", "p_coh", "p_noncoh", "p_sat", "pass", "distance"
            );
            for c in ranking.candidates.iter().take(top) {
                let ch = &c.report.checks;
                let flags: String = ch.iter().map(|t| if t.pass { 'y' } else { 'n' }).collect();
                println!(
                    "{:<16} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4}  {:<7} {:>8.4}",
                    c.run_id, c.epoch, ch[0].p, ch[1].p, ch[2].p, ch[3].p, flags, c.report.distance
                );
            }
            println!("{}/{} models inside all ranges", ranking.passing(), ranking.total);
        }
        Command::Bench {
            mode,
            grid,
            out,
            cost_model,
            depth,
            channel_mode,
            base_filters,
            seed,
        } => {
            let grid: ThroughputGrid = serde_json::from_str(&read_text(&grid)?).map_err(|e| Error::Parse {
                location: format!("line {}, column {}", e.line(), e.column()),
                message: e.to_string(),
            })?;
            let cells = match mode {
                BenchMode::Modeled => {
                    let m = match cost_model {
                        Some(p) => ScalingCostModel::from_json(&read_text(&p)?)?,
                        None => ScalingCostModel::default(),
                    };
                    let cells = report::modeled_map(&m, &grid)?;
                    summarize_modeled(&m, &grid)?;
                    cells
                }
                BenchMode::Measured => report::measured_map(
                    &grid,
                    &MeasureSettings {
                        depth,
                        mode: channel_mode,
                        patch: PatchSpec::default(),
                        base_filters,
                        seed,
                    },
                )?,
            };
            write_text(&out, &report::export_throughput_map(&cells)?)?;
            println!("wrote {} cells to {}", cells.len(), out.display());
        }
        Command::Report {
            kind,
            records,
            out,
            spec,
        } => {
            let spec = load_spec(spec.as_deref())?;
            let records = read_records(&records)?;
            let text = match kind {
                ReportKind::ParallelCoords => report::export_parallel_coords(&records, &spec)?,
                ReportKind::ProbMatrix => report::export_prob_matrix(&records, &spec)?,
                ReportKind::ThroughputMap => report::export_throughput_map(&measured_cells(&records))?,
            };
            write_text(&out, &text)?;
            println!(
                "wrote {} rows to {}",
                text.lines().count().saturating_sub(1),
                out.display()
            );
        }
    }
    Ok(())
}

/// Mean measured throughput per (workers, dataset size, batch), first-seen order.
fn measured_cells(records: &[seisbench::sweep::RunRecord]) -> Vec<ThroughputCell> {
    let mut cells: Vec<(ThroughputCell, usize)> = Vec::new();
    for r in records.iter().filter(|r| !r.epochs.is_empty()) {
        let mean = r.epochs.iter().map(|e| e.samples_per_sec).sum::<f64>() / r.epochs.len() as f64;
        let key = (r.hp.workers, r.hp.dataset_size, r.hp.batch);
        match cells
            .iter_mut()
            .find(|(c, _)| (c.workers, c.dataset_size, c.batch) == key)
        {
            Some((c, n)) => {
                c.samples_per_sec = (c.samples_per_sec * *n as f64 + mean) / (*n + 1) as f64;
                *n += 1;
            }
            None => cells.push((
                ThroughputCell {
                    workers: key.0,
                    dataset_size: key.1,
                    batch: key.2,
                    samples_per_sec: mean,
                    source: report::Source::Measured,
                },
                1,
            )),
        }
    }
    cells.into_iter().map(|(c, _)| c).collect()
}

/// Print the best worker count per (N, batch) and the smallest-to-largest
/// worker speedup.
fn summarize_modeled(m: &ScalingCostModel, grid: &ThroughputGrid) -> Result<()> {
    let (Some(&w_min), Some(&w_max)) = (grid.workers.iter().min(), grid.workers.iter().max()) else {
        return Ok(());
    };
    for &n in &grid.dataset_size {
        for &b in &grid.batch {
            let best = seisbench::trainer::best_workers(m, &grid.workers, n, b)?;
            let ratio = speedup(model_throughput(m, w_min, n, b)?, model_throughput(m, w_max, n, b)?)?;
            println!(
                "N={n} batch={b}: best W={best}; W={w_min}->{w_max}: {}",
                describe_speedup(ratio)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_mapping() {
        assert_eq!(
            exit_code(&Error::Validation {
                axis: "depth".into(),
                message: "x".into()
            }),
            1
        );
        assert_eq!(exit_code(&Error::Spec("x".into())), 1);
        assert_eq!(
            exit_code(&Error::Io {
                path: "p".into(),
                source: std::io::Error::other("x")
            }),
            2
        );
        assert_eq!(exit_code(&Error::Numeric("nan".into())), 3);
    }
}
