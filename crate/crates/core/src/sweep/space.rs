//! Hyperparameter points and the grid they are drawn from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::{ChannelMode, PatchSpec};

pub const WORKERS_MAX: usize = 32;
pub const BATCH_RANGE: (usize, usize) = (64, 512);
pub const DEPTH_RANGE: (usize, usize) = (2, 32);
pub const LR_RANGE: (f64, f64) = (0.001, 0.5);

/// One point of the nine-axis search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    /// Free-form hardware tag, recorded but not interpreted.
    pub backend_label: String,
    pub workers: usize,
    pub channel_mode: ChannelMode,
    pub batch: usize,
    pub dataset_size: usize,
    pub depth: usize,
    pub bottleneck: usize,
    pub lr: f64,
    pub epochs: usize,
}

fn check_workers(v: usize) -> Result<()> {
    if v == 0 || v > WORKERS_MAX {
        return Err(Error::validation(
            "workers",
            format!("{v} is outside 1..={WORKERS_MAX}"),
        ));
    }
    Ok(())
}

fn check_batch(v: usize) -> Result<()> {
    if !(BATCH_RANGE.0..=BATCH_RANGE.1).contains(&v) {
        return Err(Error::validation(
            "batch",
            format!("{v} is outside {}..={}", BATCH_RANGE.0, BATCH_RANGE.1),
        ));
    }
    Ok(())
}

fn check_dataset_size(v: usize) -> Result<()> {
    if v < 2 {
        return Err(Error::validation(
            "dataset_size",
            format!("{v} leaves no room for both classes"),
        ));
    }
    Ok(())
}

fn check_depth(v: usize) -> Result<()> {
    if !(DEPTH_RANGE.0..=DEPTH_RANGE.1).contains(&v) {
        return Err(Error::validation(
            "depth",
            format!("{v} is outside {}..={}", DEPTH_RANGE.0, DEPTH_RANGE.1),
        ));
    }
    Ok(())
}

fn check_bottleneck(v: usize) -> Result<()> {
    if v != 1 && v != 2 {
        return Err(Error::validation("bottleneck", format!("{v} is not 1 or 2")));
    }
    Ok(())
}

fn check_lr(v: f64) -> Result<()> {
    if !(LR_RANGE.0..=LR_RANGE.1).contains(&v) {
        return Err(Error::validation(
            "lr",
            format!("{v} is outside [{}, {}]", LR_RANGE.0, LR_RANGE.1),
        ));
    }
    Ok(())
}

fn check_epochs(v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::validation("epochs", "must be at least 1"));
    }
    Ok(())
}

fn check_label(v: &str) -> Result<()> {
    if v.trim().is_empty() {
        return Err(Error::validation("backend_label", "labels must be non-empty"));
    }
    Ok(())
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        check_label(&self.backend_label)?;
        check_workers(self.workers)?;
        check_batch(self.batch)?;
        check_dataset_size(self.dataset_size)?;
        check_depth(self.depth)?;
        check_bottleneck(self.bottleneck)?;
        check_lr(self.lr)?;
        check_epochs(self.epochs)
    }
}

/// Ordered value lists, one per [`HyperParams`] field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axes {
    pub backend_label: Vec<String>,
    pub workers: Vec<usize>,
    pub channel_mode: Vec<ChannelMode>,
    pub batch: Vec<usize>,
    pub dataset_size: Vec<usize>,
    pub depth: Vec<usize>,
    pub bottleneck: Vec<usize>,
    pub lr: Vec<f64>,
    pub epochs: Vec<usize>,
}

/// Run settings shared by every point of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub momentum: f64,
    pub base_filters: usize,
    pub coherent_fraction: f64,
    pub patch: PatchSpec,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            momentum: 0.0,
            base_filters: 16,
            coherent_fraction: 0.5,
            patch: PatchSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpace {
    pub seed: u64,
    pub axes: Axes,
    /// Explicit points, run instead of the full grid when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<HyperParams>>,
    #[serde(default)]
    pub settings: SweepSettings,
}

// Every axis optional at parse time so a missing one is reported by name.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxes {
    backend_label: Option<Vec<String>>,
    workers: Option<Vec<usize>>,
    channel_mode: Option<Vec<ChannelMode>>,
    batch: Option<Vec<usize>>,
    dataset_size: Option<Vec<usize>>,
    depth: Option<Vec<usize>>,
    bottleneck: Option<Vec<usize>>,
    lr: Option<Vec<f64>>,
    epochs: Option<Vec<usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    seed: u64,
    axes: RawAxes,
    #[serde(default)]
    points: Option<Vec<HyperParams>>,
    #[serde(default)]
    settings: SweepSettings,
}

fn required<T>(axis: &str, v: Option<Vec<T>>) -> Result<Vec<T>> {
    match v {
        None => Err(Error::validation(axis, "axis is missing")),
        Some(v) if v.is_empty() => Err(Error::validation(axis, "axis has no values")),
        Some(v) => Ok(v),
    }
}

fn each<T: Copy>(values: &[T], check: fn(T) -> Result<()>) -> Result<()> {
    values.iter().try_for_each(|&v| check(v))
}

impl SweepSpace {
    /// Parse and validate a sweep-space JSON document.
    pub fn parse(doc: &str) -> Result<Self> {
        let raw: RawSpace = serde_json::from_str(doc).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let a = raw.axes;
        let space = SweepSpace {
            seed: raw.seed,
            axes: Axes {
                backend_label: required("backend_label", a.backend_label)?,
                workers: required("workers", a.workers)?,
                channel_mode: required("channel_mode", a.channel_mode)?,
                batch: required("batch", a.batch)?,
                dataset_size: required("dataset_size", a.dataset_size)?,
                depth: required("depth", a.depth)?,
                bottleneck: required("bottleneck", a.bottleneck)?,
                lr: required("lr", a.lr)?,
                epochs: required("epochs", a.epochs)?,
            },
            points: raw.points,
            settings: raw.settings,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep space serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.axes;
        for label in &a.backend_label {
            check_label(label)?;
        }
        if a.channel_mode.is_empty() {
            return Err(Error::validation("channel_mode", "axis has no values"));
        }
        each(&a.workers, check_workers)?;
        each(&a.batch, check_batch)?;
        each(&a.dataset_size, check_dataset_size)?;
        each(&a.depth, check_depth)?;
        each(&a.bottleneck, check_bottleneck)?;
        each(&a.lr, check_lr)?;
        each(&a.epochs, check_epochs)?;
        for (name, len) in a.lengths() {
            if len == 0 {
                return Err(Error::validation(name, "axis has no values"));
            }
        }
        if let Some(points) = &self.points {
            points.iter().try_for_each(HyperParams::validate)?;
        }
        let s = &self.settings;
        s.patch.validate()?;
        if !(0.0..1.0).contains(&s.momentum) {
            return Err(Error::validation(
                "settings.momentum",
                format!("{} is outside [0, 1)", s.momentum),
            ));
        }
        if s.base_filters == 0 {
            return Err(Error::validation("settings.base_filters", "must be positive"));
        }
        if !(s.coherent_fraction > 0.0 && s.coherent_fraction < 1.0) {
            return Err(Error::validation(
                "settings.coherent_fraction",
                format!("{} is outside (0, 1)", s.coherent_fraction),
            ));
        }
        Ok(())
    }

    /// Points to run: the explicit list if given, else the full grid.
    pub fn points(&self) -> Vec<HyperParams> {
        match &self.points {
            Some(p) => p.clone(),
            None => enumerate(&self.axes),
        }
    }
}

impl Axes {
    /// `(axis name, number of values)` in field order.
    pub fn lengths(&self) -> [(&'static str, usize); 9] {
        [
            ("backend_label", self.backend_label.len()),
            ("workers", self.workers.len()),
            ("channel_mode", self.channel_mode.len()),
            ("batch", self.batch.len()),
            ("dataset_size", self.dataset_size.len()),
            ("depth", self.depth.len()),
            ("bottleneck", self.bottleneck.len()),
            ("lr", self.lr.len()),
            ("epochs", self.epochs.len()),
        ]
    }

    pub fn grid_size(&self) -> usize {
        self.lengths().iter().map(|(_, n)| n).product()
    }
}

/// Cartesian product of the axes in lexicographic order: the first axis
/// varies slowest, values appear in their listed order.
pub fn enumerate(axes: &Axes) -> Vec<HyperParams> {
    let dims: Vec<usize> = axes.lengths().iter().map(|(_, n)| *n).collect();
    let total = axes.grid_size();
    let mut out = Vec::with_capacity(total);
    let mut idx = [0usize; 9];
    for _ in 0..total {
        out.push(HyperParams {
            backend_label: axes.backend_label[idx[0]].clone(),
            workers: axes.workers[idx[1]],
            channel_mode: axes.channel_mode[idx[2]],
            batch: axes.batch[idx[3]],
            dataset_size: axes.dataset_size[idx[4]],
            depth: axes.depth[idx[5]],
            bottleneck: axes.bottleneck[idx[6]],
            lr: axes.lr[idx[7]],
            epochs: axes.epochs[idx[8]],
        });
        for d in (0..9).rev() {
            idx[d] += 1;
            if idx[d] < dims[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}
