use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Patch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    Grayscale,
    Rgb,
}

impl ChannelMode {
    pub fn channels(self) -> usize {
        match self {
            ChannelMode::Grayscale => 1,
            ChannelMode::Rgb => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelMode::Grayscale => "grayscale",
            ChannelMode::Rgb => "rgb",
        }
    }
}

impl fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grayscale" | "gray" | "bw" => Ok(ChannelMode::Grayscale),
            "rgb" | "color" => Ok(ChannelMode::Rgb),
            other => Err(Error::Spec(format!("unknown channel mode {other:?}"))),
        }
    }
}

/// Channel-major (`C × H × W`) image with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("image must have 1 or 3 channels, got {channels}")));
        }
        if data.len() != channels * height * width {
            return Err(Error::Shape(format!(
                "image data has {} values, expected {}",
                data.len(),
                channels * height * width
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Data(format!("image value {v} outside [0, 1]")));
        }
        Ok(ImageTensor {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Affine rescale to `[0, 1]`; a constant patch maps to 0.5 everywhere.
pub fn normalize_patch(p: &Patch) -> Result<Patch> {
    if !p.is_finite() {
        return Err(Error::Data("patch contains non-finite values".into()));
    }
    let (lo, hi) = p
        .values
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let values = if hi > lo {
        let (lo, span) = (lo as f64, hi as f64 - lo as f64);
        p.values.iter().map(|&v| ((v as f64 - lo) / span) as f32).collect()
    } else {
        vec![0.5; p.values.len()]
    };
    Ok(Patch { values, ..p.clone() })
}

/// Three-anchor diverging colormap: 0 → blue, 0.5 → white, 1 → red.
pub fn diverging_rgb(v: f32) -> [f32; 3] {
    if v <= 0.5 {
        let s = 2.0 * v;
        [s, s, 1.0]
    } else {
        let s = 2.0 * (1.0 - v);
        [1.0, s, s]
    }
}

pub fn encode_channels(p: &Patch, mode: ChannelMode) -> Result<ImageTensor> {
    if let Some(v) = p.values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Data(format!(
            "encode_channels needs a normalized patch, found value {v}"
        )));
    }
    let (h, w) = (p.spec.n_time, p.spec.n_chan);
    let data = match mode {
        ChannelMode::Grayscale => p.values.clone(),
        ChannelMode::Rgb => {
            let plane = h * w;
            let mut data = vec![0.0f32; 3 * plane];
            for (i, &v) in p.values.iter().enumerate() {
                let [r, g, b] = diverging_rgb(v);
                data[i] = r;
                data[plane + i] = g;
                data[2 * plane + i] = b;
            }
            data
        }
    };
    Ok(ImageTensor {
        channels: mode.channels(),
        height: h,
        width: w,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_patch, PatchSpec, SignalType};
    use proptest::prelude::*;

    fn patch_of(values: Vec<f32>) -> Patch {
        let spec = PatchSpec::new(8, 8).unwrap();
        let mut v = values;
        v.resize(64, v.last().copied().unwrap_or(0.0));
        Patch::from_values(spec, v, None).unwrap()
    }

    #[test]
    fn affine_endpoints() {
        let p = patch_of(vec![-2.0, 0.0, 2.0]);
        let n = normalize_patch(&p).unwrap();
        assert_eq!(&n.values[..3], &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_maps_to_half() {
        let n = normalize_patch(&patch_of(vec![0.0; 64])).unwrap();
        assert!(n.values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn non_finite_rejected() {
        let mut p = patch_of(vec![0.0; 64]);
        p.values[3] = f32::NAN;
        assert!(matches!(normalize_patch(&p), Err(Error::Data(_))));
    }

    #[test]
    fn colormap_anchors() {
        assert_eq!(diverging_rgb(0.0), [0.0, 0.0, 1.0]);
        assert_eq!(diverging_rgb(0.5), [1.0, 1.0, 1.0]);
        assert_eq!(diverging_rgb(1.0), [1.0, 0.0, 0.0]);
        assert_eq!(diverging_rgb(0.25), [0.5, 0.5, 1.0]);
        assert_eq!(diverging_rgb(0.75), [1.0, 0.5, 0.5]);
    }

    #[test]
    fn grayscale_is_identity_and_rgb_has_three_planes() {
        let p = normalize_patch(&gen_patch(SignalType::CoherentWaves, &PatchSpec::default(), 5).unwrap()).unwrap();
        let g = encode_channels(&p, ChannelMode::Grayscale).unwrap();
        assert_eq!(g.channels, 1);
        assert_eq!(g.data, p.values);
        let c = encode_channels(&p, ChannelMode::Rgb).unwrap();
        assert_eq!(c.channels, 3);
        assert_eq!(c.len(), 3 * 64 * 64);
        assert!(c.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn unnormalized_rejected() {
        let p = patch_of(vec![-2.0, 0.0, 2.0]);
        assert!(matches!(
            encode_channels(&p, ChannelMode::Grayscale),
            Err(Error::Data(_))
        ));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(values in proptest::collection::vec(-1e6f32..1e6, 64)) {
            let p = Patch::from_values(PatchSpec::new(8, 8).unwrap(), values, None).unwrap();
            let once = normalize_patch(&p).unwrap();
            let twice = normalize_patch(&once).unwrap();
            prop_assert_eq!(&once.values, &twice.values);
            prop_assert!(once.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn encoded_values_in_unit_range(values in proptest::collection::vec(-5f32..5.0, 64)) {
            let p = Patch::from_values(PatchSpec::new(8, 8).unwrap(), values, None).unwrap();
            let n = normalize_patch(&p).unwrap();
            for mode in [ChannelMode::Grayscale, ChannelMode::Rgb] {
                let img = encode_channels(&n, mode).unwrap();
                prop_assert_eq!(img.channels, mode.channels());
                prop_assert!(img.data.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
