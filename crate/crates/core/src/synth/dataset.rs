use super::{encode_channels, gen_patch, normalize_patch, ChannelMode, ImageTensor, PatchSpec, SignalType};
use crate::error::{Error, Result};
use crate::rng::{mix64, stream};

/// Binary label: 1 for coherent (usable energy), 0 for white noise.
pub type Label = u8;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: ImageTensor,
    pub label: Label,
}

/// Random-access source of labeled training images.
pub trait DataSource: Sync {
    fn len(&self) -> usize;
    fn mode(&self) -> ChannelMode;
    fn patch_spec(&self) -> PatchSpec;

    /// Write item `index` (channel-major) into `out` and return its label.
    fn write_item(&self, index: usize, out: &mut [f32]) -> Result<Label>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn item_len(&self) -> usize {
        self.mode().channels() * self.patch_spec().len()
    }
}

/// Binary coherent-vs-noise dataset.
///
/// Items are generated on demand from `mix64(dataset_stream, index)`; call
/// [`Dataset::materialize`] to keep the encoded images in memory instead.
#[derive(Debug, Clone)]
pub struct Dataset {
    n: usize,
    n_coherent: usize,
    spec: PatchSpec,
    mode: ChannelMode,
    stream_seed: u64,
    cache: Option<Vec<f32>>,
}

impl Dataset {
    pub fn n_coherent(&self) -> usize {
        self.n_coherent
    }

    /// Whether item `index` is a coherent patch. Coherent items are spread
    /// evenly through the index range.
    pub fn label_of(&self, index: usize) -> Label {
        let (n, k) = (self.n as u128, self.n_coherent as u128);
        let i = index as u128;
        ((i + 1) * k / n > i * k / n) as Label
    }

    pub fn item_seed(&self, index: usize) -> u64 {
        mix64(self.stream_seed, index as u64)
    }

    pub fn generate(&self, index: usize) -> Result<LabeledImage> {
        if index >= self.n {
            return Err(Error::Spec(format!(
                "item {index} out of range for dataset of {}",
                self.n
            )));
        }
        let label = self.label_of(index);
        let kind = if label == 1 {
            SignalType::CoherentWaves
        } else {
            SignalType::WhiteNoise
        };
        let patch = gen_patch(kind, &self.spec, self.item_seed(index))?;
        let image = encode_channels(&normalize_patch(&patch)?, self.mode)?;
        Ok(LabeledImage { image, label })
    }

    /// Encode every item up front.
    pub fn materialize(mut self) -> Result<Self> {
        if self.cache.is_none() {
            let stride = self.item_len();
            let mut buf = Vec::with_capacity(self.n * stride);
            for i in 0..self.n {
                buf.extend_from_slice(&self.generate(i)?.image.data);
            }
            self.cache = Some(buf);
        }
        Ok(self)
    }

    pub fn is_materialized(&self) -> bool {
        self.cache.is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<LabeledImage>> + '_ {
        (0..self.n).map(move |i| self.generate(i))
    }
}

impl DataSource for Dataset {
    fn len(&self) -> usize {
        self.n
    }

    fn mode(&self) -> ChannelMode {
        self.mode
    }

    fn patch_spec(&self) -> PatchSpec {
        self.spec
    }

    fn write_item(&self, index: usize, out: &mut [f32]) -> Result<Label> {
        let stride = self.item_len();
        if out.len() != stride {
            return Err(Error::Shape(format!(
                "item buffer has {} slots, need {stride}",
                out.len()
            )));
        }
        match &self.cache {
            Some(buf) => {
                if index >= self.n {
                    return Err(Error::Spec(format!(
                        "item {index} out of range for dataset of {}",
                        self.n
                    )));
                }
                out.copy_from_slice(&buf[index * stride..(index + 1) * stride]);
                Ok(self.label_of(index))
            }
            None => {
                let item = self.generate(index)?;
                out.copy_from_slice(&item.image.data);
                Ok(item.label)
            }
        }
    }
}

/// Describe a coherent/noise dataset of `n` items. Nothing is generated until
/// items are requested.
pub fn build_dataset(
    n: usize,
    coherent_fraction: f64,
    spec: &PatchSpec,
    mode: ChannelMode,
    seed: u64,
) -> Result<Dataset> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::Spec(format!("dataset needs at least 2 items, got {n}")));
    }
    if !(coherent_fraction > 0.0 && coherent_fraction < 1.0) {
        return Err(Error::Spec(format!(
            "coherent fraction must lie in (0, 1), got {coherent_fraction}"
        )));
    }
    let n_coherent = (n as f64 * coherent_fraction).round() as usize;
    if n_coherent == 0 || n_coherent == n {
        return Err(Error::Spec(format!(
            "{n} items at fraction {coherent_fraction} leaves one class empty"
        )));
    }
    Ok(Dataset {
        n,
        n_coherent,
        spec: *spec,
        mode,
        stream_seed: mix64(seed, stream::DATASET),
        cache: None,
    })
}

/// One encoded image per [`SignalType`], in [`SignalType::ALL`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pub images: [ImageTensor; 4],
}

impl ReferenceSet {
    pub fn get(&self, kind: SignalType) -> &ImageTensor {
        &self.images[kind.index()]
    }

    pub fn mode(&self) -> ChannelMode {
        if self.images[0].channels == 3 {
            ChannelMode::Rgb
        } else {
            ChannelMode::Grayscale
        }
    }
}

pub fn reference_seed(seed: u64, kind: SignalType) -> u64 {
    mix64(mix64(seed, stream::REFERENCE), kind.index() as u64)
}

pub fn build_reference_set(spec: &PatchSpec, mode: ChannelMode, seed: u64) -> Result<ReferenceSet> {
    spec.validate()?;
    let encode = |kind: SignalType| -> Result<ImageTensor> {
        let patch = gen_patch(kind, spec, reference_seed(seed, kind))?;
        encode_channels(&normalize_patch(&patch)?, mode)
    };
    Ok(ReferenceSet {
        images: [
            encode(SignalType::WhiteNoise)?,
            encode(SignalType::CoherentWaves)?,
            encode(SignalType::NonCoherentWaves)?,
            encode(SignalType::Saturated)?,
        ],
    })
}
