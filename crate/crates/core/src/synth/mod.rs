//! Synthetic DAS-like spatiotemporal patches.
//!
//! A patch is a `n_time × n_chan` amplitude record stored row-major (one row
//! per time sample). Four generators produce the reference signal families:
//! white noise, coherent linear-moveout events, crossing (non-coherent)
//! events, and clipped (saturated) event mixes.

mod dataset;
mod encode;
mod io;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

pub use dataset::{
    build_dataset, build_reference_set, reference_seed, DataSource, Dataset, Label, LabeledImage, ReferenceSet,
};
pub use encode::{encode_channels, normalize_patch, ChannelMode, ImageTensor};
pub use io::{read_patch, write_patch};

/// Noise standard deviation for each family.
const WHITE_NOISE_SIGMA: f64 = 1.0;
const COHERENT_NOISE_SIGMA: f64 = 0.1;
const NONCOHERENT_NOISE_SIGMA: f64 = 0.3;
const SATURATED_NOISE_SIGMA: f64 = 0.1;

/// Clip level as a fraction of the nominal event peak.
pub const CLIP_FRACTION: f64 = 0.8;

/// A sample belongs to the event band when the clean event signal reaches at
/// least this fraction of the clip level. At 0.6 the Ricker side lobes
/// (at most 0.446 of the peak) stay outside the band.
pub const EVENT_BAND_FRACTION: f64 = 0.6;

/// Minimum share of event-band samples pinned at a clip bound.
pub const MIN_CLIP_FRACTION: f64 = 0.2;

const MAX_SATURATION_DRAWS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub n_time: usize,
    pub n_chan: usize,
    /// Seconds per time sample.
    pub dt: f64,
    /// Meters per channel.
    pub dx: f64,
}

impl Default for PatchSpec {
    fn default() -> Self {
        PatchSpec {
            n_time: 64,
            n_chan: 64,
            dt: 0.004,
            dx: 2.0,
        }
    }
}

impl PatchSpec {
    pub fn new(n_time: usize, n_chan: usize) -> Result<Self> {
        let spec = PatchSpec {
            n_time,
            n_chan,
            ..PatchSpec::default()
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_time < 8 || self.n_chan < 8 {
            return Err(Error::Spec(format!(
                "patch must be at least 8x8, got {}x{}",
                self.n_time, self.n_chan
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.dx > 0.0 && self.dx.is_finite()) {
            return Err(Error::Spec(format!(
                "sampling intervals must be positive, got dt={} dx={}",
                self.dt, self.dx
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_time * self.n_chan
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalType {
    WhiteNoise,
    CoherentWaves,
    NonCoherentWaves,
    Saturated,
}

impl SignalType {
    /// Fixed reference order.
    pub const ALL: [SignalType; 4] = [
        SignalType::WhiteNoise,
        SignalType::CoherentWaves,
        SignalType::NonCoherentWaves,
        SignalType::Saturated,
    ];

    pub fn index(self) -> usize {
        match self {
            SignalType::WhiteNoise => 0,
            SignalType::CoherentWaves => 1,
            SignalType::NonCoherentWaves => 2,
            SignalType::Saturated => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SignalType::WhiteNoise => "white_noise",
            SignalType::CoherentWaves => "coherent_waves",
            SignalType::NonCoherentWaves => "noncoherent_waves",
            SignalType::Saturated => "saturated",
        }
    }
}

impl fmt::Display for SignalType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SignalType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white_noise" | "white-noise" | "noise" => Ok(SignalType::WhiteNoise),
            "coherent_waves" | "coherent-waves" | "coherent" => Ok(SignalType::CoherentWaves),
            "noncoherent_waves" | "noncoherent-waves" | "noncoherent" => Ok(SignalType::NonCoherentWaves),
            "saturated" => Ok(SignalType::Saturated),
            other => Err(Error::Spec(format!("unknown signal type {other:?}"))),
        }
    }
}

/// One linear-moveout Ricker event.
///
/// The arrival time at channel `x` is `onset + (x - origin_chan) / velocity`,
/// so `velocity` is measured in channels per time sample and its sign gives
/// the propagation direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentEventParams {
    pub amplitude: f64,
    pub velocity: f64,
    pub origin_chan: f64,
    pub onset: f64,
    /// Ricker peak frequency in cycles per sample.
    pub wavelet_freq: f64,
}

impl CoherentEventParams {
    pub fn validate(&self) -> Result<()> {
        if self.amplitude.is_nan() || self.amplitude <= 0.0 {
            return Err(Error::Spec("event amplitude must be positive".into()));
        }
        if self.velocity == 0.0 || !self.velocity.is_finite() {
            return Err(Error::Spec("event velocity must be finite and nonzero".into()));
        }
        if !(self.wavelet_freq > 0.0 && self.wavelet_freq < 0.5) {
            return Err(Error::Spec("wavelet frequency must lie in (0, 0.5)".into()));
        }
        Ok(())
    }

    /// Arrival time (fractional sample) at channel `chan`.
    pub fn arrival(&self, chan: f64) -> f64 {
        self.onset + (chan - self.origin_chan) / self.velocity
    }
}

/// Zero-phase Ricker wavelet, unit peak at `t = 0`.
pub fn ricker(t: f64, freq: f64) -> f64 {
    let a = (PI * freq * t).powi(2);
    (1.0 - 2.0 * a) * (-a).exp()
}

/// Generation parameters recorded alongside each patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct GenMeta {
    pub events: Vec<CoherentEventParams>,
    pub noise_sigma: f64,
    /// Hard-clip bound `c` for saturated patches.
    pub clip_level: Option<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub spec: PatchSpec,
    /// Row-major `n_time × n_chan`.
    pub values: Vec<f32>,
    pub label: Option<SignalType>,
    pub meta: GenMeta,
}

impl Patch {
    pub fn from_values(spec: PatchSpec, values: Vec<f32>, label: Option<SignalType>) -> Result<Self> {
        spec.validate()?;
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "patch holds {} values, spec needs {}",
                values.len(),
                spec.len()
            )));
        }
        Ok(Patch {
            spec,
            values,
            label,
            meta: GenMeta::default(),
        })
    }

    pub fn at(&self, t: usize, x: usize) -> f32 {
        self.values[t * self.spec.n_chan + x]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Render the noise-free superposition of `events` on the patch grid.
pub fn render_events(spec: &PatchSpec, events: &[CoherentEventParams]) -> Vec<f64> {
    let mut out = vec![0.0; spec.len()];
    for ev in events {
        for x in 0..spec.n_chan {
            let t0 = ev.arrival(x as f64);
            for t in 0..spec.n_time {
                out[t * spec.n_chan + x] += ev.amplitude * ricker(t as f64 - t0, ev.wavelet_freq);
            }
        }
    }
    out
}

fn random_event<R: Rng>(
    rng: &mut R,
    spec: &PatchSpec,
    amplitude: (f64, f64),
    speed: (f64, f64),
    sign: f64,
) -> CoherentEventParams {
    let n_time = spec.n_time as f64;
    let n_chan = spec.n_chan as f64;
    let velocity = sign * rng.random_range(speed.0..=speed.1);
    let origin_chan = rng.random_range(0.0..n_chan - 1.0);
    // Anchor the event so that its arrival at the patch centre channel falls
    // in the middle half of the record.
    let centre_arrival = rng.random_range(0.25 * n_time..0.75 * n_time);
    let onset = centre_arrival - (0.5 * (n_chan - 1.0) - origin_chan) / velocity;
    CoherentEventParams {
        amplitude: rng.random_range(amplitude.0..=amplitude.1),
        velocity,
        origin_chan,
        onset,
        wavelet_freq: rng.random_range(0.06..=0.15),
    }
}

fn random_sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

fn add_noise<R: Rng>(rng: &mut R, signal: &mut [f64], sigma: f64) {
    let normal = Normal::new(0.0, sigma).expect("sigma is a positive constant");
    for v in signal.iter_mut() {
        *v += normal.sample(rng);
    }
}

/// Deterministically generate one labeled patch.
pub fn gen_patch(kind: SignalType, spec: &PatchSpec, seed: u64) -> Result<Patch> {
    spec.validate()?;
    let mut rng = seeded(seed);
    let mut meta = GenMeta::default();

    let mut signal = match kind {
        SignalType::WhiteNoise => {
            meta.noise_sigma = WHITE_NOISE_SIGMA;
            vec![0.0; spec.len()]
        }
        SignalType::CoherentWaves => {
            meta.noise_sigma = COHERENT_NOISE_SIGMA;
            let n = rng.random_range(1..=3);
            let sign = random_sign(&mut rng);
            meta.events = (0..n)
                .map(|_| random_event(&mut rng, spec, (0.6, 1.0), (0.75, 3.0), sign))
                .collect();
            render_events(spec, &meta.events)
        }
        SignalType::NonCoherentWaves => {
            meta.noise_sigma = NONCOHERENT_NOISE_SIGMA;
            let n = rng.random_range(3..=6);
            let first = random_sign(&mut rng);
            meta.events = (0..n)
                .map(|i| {
                    // The first two events always cross.
                    let sign = match i {
                        0 => first,
                        1 => -first,
                        _ => random_sign(&mut rng),
                    };
                    random_event(&mut rng, spec, (0.6, 1.0), (0.5, 3.0), sign)
                })
                .collect();
            render_events(spec, &meta.events)
        }
        SignalType::Saturated => return gen_saturated(spec, &mut rng),
    };
    for ev in &meta.events {
        ev.validate()?;
    }
    add_noise(&mut rng, &mut signal, meta.noise_sigma);
    let values = signal.iter().map(|&v| v as f32).collect();

    Ok(Patch {
        spec: *spec,
        values,
        label: Some(kind),
        meta,
    })
}

/// Share of event-band samples whose value sits on a clip bound.
fn band_clip_fraction(values: &[f32], clean: &[f64], clip: f32) -> f64 {
    let threshold = EVENT_BAND_FRACTION * clip as f64;
    let (band, clipped) = clean
        .iter()
        .zip(values)
        .filter(|(c, _)| c.abs() >= threshold)
        .fold((0usize, 0usize), |(b, k), (_, v)| {
            (b + 1, k + usize::from(v.abs() == clip))
        });
    if band == 0 {
        0.0
    } else {
        clipped as f64 / band as f64
    }
}

/// Equal-amplitude events clipped at `CLIP_FRACTION` of their peak. Event
/// sets whose interference keeps too few band samples at the bound (closely
/// spaced parallel events can cancel) are redrawn from the same stream.
fn gen_saturated<R: Rng>(spec: &PatchSpec, rng: &mut R) -> Result<Patch> {
    for _ in 0..MAX_SATURATION_DRAWS {
        let n = rng.random_range(2..=4);
        let peak = rng.random_range(3.0..=5.0);
        let events: Vec<CoherentEventParams> = (0..n)
            .map(|_| {
                let sign = random_sign(rng);
                random_event(rng, spec, (peak, peak), (0.75, 3.0), sign)
            })
            .collect();
        let clip = (CLIP_FRACTION * peak) as f32;
        let clean = render_events(spec, &events);
        let mut signal = clean.clone();
        add_noise(rng, &mut signal, SATURATED_NOISE_SIGMA);
        let values: Vec<f32> = signal.iter().map(|&v| (v as f32).clamp(-clip, clip)).collect();
        if band_clip_fraction(&values, &clean, clip) >= MIN_CLIP_FRACTION {
            return Ok(Patch {
                spec: *spec,
                values,
                label: Some(SignalType::Saturated),
                meta: GenMeta {
                    events,
                    noise_sigma: SATURATED_NOISE_SIGMA,
                    clip_level: Some(clip),
                },
            });
        }
    }
    Err(Error::Spec(format!(
        "no saturated event set reached the clip fraction in {MAX_SATURATION_DRAWS} draws"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec64() -> PatchSpec {
        PatchSpec::new(64, 64).unwrap()
    }

    /// Fraction of event-band samples sitting exactly on a clip bound.
    fn clipped_fraction(p: &Patch) -> f64 {
        let c = p.meta.clip_level.unwrap();
        let clean = render_events(&p.spec, &p.meta.events);
        let band: Vec<usize> = (0..clean.len())
            .filter(|&i| clean[i].abs() >= EVENT_BAND_FRACTION * c as f64)
            .collect();
        let clipped = band.iter().filter(|&&i| p.values[i].abs() == c).count();
        clipped as f64 / band.len() as f64
    }

    /// Beam power of a slant stack along the event's known moveout, using
    /// linear interpolation in time.
    fn slant_stack_power(p: &Patch, ev: &CoherentEventParams) -> f64 {
        let mut sum = 0.0;
        for x in 0..p.spec.n_chan {
            let t = ev.arrival(x as f64);
            if t < 0.0 || t > (p.spec.n_time - 1) as f64 {
                continue;
            }
            let t0 = t.floor() as usize;
            let t1 = (t0 + 1).min(p.spec.n_time - 1);
            let w = t - t0 as f64;
            sum += (1.0 - w) * p.at(t0, x) as f64 + w * p.at(t1, x) as f64;
        }
        sum * sum
    }

    fn median_row_energy(p: &Patch) -> f64 {
        let mut rows: Vec<f64> = (0..p.spec.n_time)
            .map(|t| (0..p.spec.n_chan).map(|x| (p.at(t, x) as f64).powi(2)).sum())
            .collect();
        rows.sort_by(f64::total_cmp);
        let n = rows.len();
        if n % 2 == 1 {
            rows[n / 2]
        } else {
            0.5 * (rows[n / 2 - 1] + rows[n / 2])
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in SignalType::ALL {
            let a = gen_patch(kind, &spec64(), 7).unwrap();
            let b = gen_patch(kind, &spec64(), 7).unwrap();
            assert_eq!(a.values.len(), 64 * 64);
            let same = a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits());
            assert!(same, "{kind} not bit-identical");
            assert_eq!(a.label, Some(kind));
        }
    }

    #[test]
    fn different_seeds_differ() {
        let a = gen_patch(SignalType::WhiteNoise, &spec64(), 1).unwrap();
        let b = gen_patch(SignalType::WhiteNoise, &spec64(), 2).unwrap();
        assert_ne!(a.values, b.values);
    }

    #[test]
    fn saturated_clip_fraction_seed_1() {
        let p = gen_patch(SignalType::Saturated, &spec64(), 1).unwrap();
        let frac = clipped_fraction(&p);
        assert!(frac >= 0.20, "clip fraction {frac}");
    }

    #[test]
    fn saturated_clip_fraction_many_seeds() {
        for seed in 0..500 {
            let p = gen_patch(SignalType::Saturated, &spec64(), seed).unwrap();
            let c = p.meta.clip_level.unwrap();
            assert!(p.values.iter().all(|v| v.abs() <= c));
            let frac = clipped_fraction(&p);
            assert!(frac >= 0.20, "seed {seed}: clip fraction {frac}");
        }
    }

    #[test]
    fn coherent_slant_stack_seed_3() {
        let p = gen_patch(SignalType::CoherentWaves, &spec64(), 3).unwrap();
        let ratio = slant_stack_power(&p, &p.meta.events[0]) / median_row_energy(&p);
        assert!(ratio >= 5.0, "ratio {ratio}");
    }

    #[test]
    fn coherent_contract_many_seeds() {
        for seed in 0..200 {
            let p = gen_patch(SignalType::CoherentWaves, &spec64(), seed).unwrap();
            let ev = &p.meta.events;
            assert!((1..=3).contains(&ev.len()));
            assert!(ev.iter().all(|e| e.velocity.signum() == ev[0].velocity.signum()));
            assert!(ev.iter().all(|e| e.amplitude >= 5.0 * p.meta.noise_sigma));
            let ratio = slant_stack_power(&p, &ev[0]) / median_row_energy(&p);
            assert!(ratio >= 5.0, "seed {seed}: ratio {ratio}");
        }
    }

    #[test]
    fn slant_stack_on_white_noise_is_weak() {
        let p = gen_patch(SignalType::WhiteNoise, &spec64(), 3).unwrap();
        let probe = CoherentEventParams {
            amplitude: 1.0,
            velocity: 1.5,
            origin_chan: 10.0,
            onset: 20.0,
            wavelet_freq: 0.1,
        };
        let ratio = slant_stack_power(&p, &probe) / median_row_energy(&p);
        assert!(ratio < 5.0, "ratio {ratio}");
    }

    #[test]
    fn noncoherent_has_crossing_events() {
        for seed in 0..100 {
            let p = gen_patch(SignalType::NonCoherentWaves, &spec64(), seed).unwrap();
            let ev = &p.meta.events;
            assert!(ev.len() >= 3);
            assert!(ev.iter().any(|e| e.velocity > 0.0));
            assert!(ev.iter().any(|e| e.velocity < 0.0));
            assert!(p.meta.noise_sigma > COHERENT_NOISE_SIGMA);
        }
    }

    #[test]
    fn white_noise_is_zero_mean() {
        let p = gen_patch(SignalType::WhiteNoise, &PatchSpec::new(128, 128).unwrap(), 11).unwrap();
        let n = p.values.len() as f64;
        let mean = p.values.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = p.values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
        assert!(p.meta.events.is_empty());
    }

    #[test]
    fn invalid_spec_rejected() {
        let bad = PatchSpec {
            n_time: 4,
            ..PatchSpec::default()
        };
        assert!(matches!(
            gen_patch(SignalType::WhiteNoise, &bad, 0),
            Err(Error::Spec(_))
        ));
        let bad = PatchSpec {
            dt: 0.0,
            ..PatchSpec::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Spec(_))));
    }

    #[test]
    fn ricker_shape() {
        assert_eq!(ricker(0.0, 0.1), 1.0);
        assert!(ricker(3.0, 0.1) < ricker(0.0, 0.1));
        assert!((ricker(2.5, 0.1) - ricker(-2.5, 0.1)).abs() < 1e-15);
    }

    #[test]
    fn signal_type_parses() {
        for kind in SignalType::ALL {
            assert_eq!(kind.as_str().parse::<SignalType>().unwrap(), kind);
        }
        assert!("banana".parse::<SignalType>().is_err());
    }
}
