use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn default_true() -> bool {
    true
}

fn is_true(v: &bool) -> bool {
    *v
}

/// Architecture axes of the residual classifier.
///
/// Serialized as `{"depth","in_channels","bottleneck","base_filters"}`; the
/// normalization switch only appears when it is turned off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchSpec {
    /// Hidden convolution layers between the stem and the head.
    pub depth: usize,
    pub in_channels: usize,
    /// Width of the final classification layer (1 = unary, 2 = binary).
    pub bottleneck: usize,
    pub base_filters: usize,
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub batch_norm: bool,
}

impl ArchSpec {
    pub const MIN_DEPTH: usize = 2;
    pub const MAX_DEPTH: usize = 32;
    pub const DEFAULT_BASE_FILTERS: usize = 16;

    pub fn new(depth: usize, in_channels: usize, bottleneck: usize) -> Result<Self> {
        let arch = ArchSpec {
            depth,
            in_channels,
            bottleneck,
            base_filters: Self::DEFAULT_BASE_FILTERS,
            batch_norm: true,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_base_filters(mut self, base_filters: usize) -> Self {
        self.base_filters = base_filters;
        self
    }

    pub fn without_norm(mut self) -> Self {
        self.batch_norm = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(Self::MIN_DEPTH..=Self::MAX_DEPTH).contains(&self.depth) {
            return Err(Error::Spec(format!("depth must lie in 2..=32, got {}", self.depth)));
        }
        if self.in_channels != 1 && self.in_channels != 3 {
            return Err(Error::Spec(format!(
                "in_channels must be 1 or 3, got {}",
                self.in_channels
            )));
        }
        if self.bottleneck != 1 && self.bottleneck != 2 {
            return Err(Error::Spec(format!(
                "bottleneck must be 1 or 2, got {}",
                self.bottleneck
            )));
        }
        if self.base_filters == 0 {
            return Err(Error::Spec("base_filters must be positive".into()));
        }
        Ok(())
    }

    pub fn residual_blocks(&self) -> usize {
        self.depth / 2
    }

    pub fn has_extra_conv(&self) -> bool {
        self.depth % 2 == 1
    }

    /// Residual blocks per stage; at most three stages, earlier stages take
    /// the remainder.
    pub fn stage_sizes(&self) -> Vec<usize> {
        let blocks = self.residual_blocks();
        let stages = blocks.min(3);
        (0..stages)
            .map(|s| blocks / stages + usize::from(s < blocks % stages))
            .collect()
    }

    pub fn stage_filters(&self, stage: usize) -> usize {
        self.base_filters << stage
    }

    pub fn final_filters(&self) -> usize {
        self.stage_filters(self.stage_sizes().len() - 1)
    }
}

/// Closed-form trainable parameter count.
pub fn count_params(arch: &ArchSpec) -> usize {
    let norm = |c: usize| if arch.batch_norm { 2 * c } else { 0 };
    let conv3 = |i: usize, o: usize| 9 * i * o + norm(o);
    let base = arch.base_filters;
    let mut total = conv3(arch.in_channels, base);
    if arch.has_extra_conv() {
        total += conv3(base, base);
    }
    let mut channels = base;
    for (s, &blocks) in arch.stage_sizes().iter().enumerate() {
        let f = arch.stage_filters(s);
        // First block of a stage may change width or stride.
        total += conv3(channels, f) + conv3(f, f);
        if channels != f || s > 0 {
            total += channels * f + norm(f);
        }
        total += (blocks - 1) * 2 * conv3(f, f);
        channels = f;
    }
    total + channels * arch.bottleneck + arch.bottleneck
}
