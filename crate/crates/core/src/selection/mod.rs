//! Reference-set evaluation and the expected-range gate used to pick models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Scalar;
use crate::resnet::Model;
use crate::sweep::RunRecord;
use crate::synth::{ReferenceSet, SignalType};
use crate::trainer::RefProbs;

/// Open interval `(lo, hi)` of acceptable usable-energy probability per type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedRangeSpec {
    pub white_noise: (f64, f64),
    pub coherent: (f64, f64),
    pub noncoherent: (f64, f64),
    pub saturated: (f64, f64),
}

impl Default for ExpectedRangeSpec {
    fn default() -> Self {
        ExpectedRangeSpec {
            white_noise: (0.0, 0.1),
            coherent: (0.9, 1.0),
            noncoherent: (0.7, 0.9),
            saturated: (0.2, 0.3),
        }
    }
}

impl ExpectedRangeSpec {
    pub fn get(&self, kind: SignalType) -> (f64, f64) {
        match kind {
            SignalType::WhiteNoise => self.white_noise,
            SignalType::CoherentWaves => self.coherent,
            SignalType::NonCoherentWaves => self.noncoherent,
            SignalType::Saturated => self.saturated,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for kind in SignalType::ALL {
            let (lo, hi) = self.get(kind);
            if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                return Err(Error::validation(
                    range_key(kind),
                    format!("need 0 ≤ lo < hi ≤ 1, got ({lo}, {hi})"),
                ));
            }
        }
        Ok(())
    }

    pub fn from_json(doc: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(doc).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        spec.validate()?;
        Ok(spec)
    }
}

/// JSON key of a signal type in range specs and probability records.
pub fn range_key(kind: SignalType) -> &'static str {
    match kind {
        SignalType::WhiteNoise => "white_noise",
        SignalType::CoherentWaves => "coherent",
        SignalType::NonCoherentWaves => "noncoherent",
        SignalType::Saturated => "saturated",
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TypeCheck {
    pub kind: SignalType,
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RangeReport {
    /// In [`SignalType::ALL`] order.
    pub checks: [TypeCheck; 4],
    /// True iff every type passes.
    pub pass: bool,
    /// `Σ |p − (lo + hi)/2|` over the four types.
    pub distance: f64,
}

/// Strict containment of each probability in its interval.
pub fn check_ranges(probs: &RefProbs, spec: &ExpectedRangeSpec) -> RangeReport {
    let checks = SignalType::ALL.map(|kind| {
        let p = probs.get(kind);
        let (lo, hi) = spec.get(kind);
        TypeCheck {
            kind,
            p,
            lo,
            hi,
            pass: lo < p && p < hi,
        }
    });
    RangeReport {
        pass: checks.iter().all(|c| c.pass),
        distance: checks.iter().map(|c| (c.p - (c.lo + c.hi) / 2.0).abs()).sum(),
        checks,
    }
}

/// Usable-energy probability of every reference image, in eval mode.
pub fn eval_reference<T: Scalar>(model: &Model<T>, refset: &ReferenceSet) -> Result<RefProbs> {
    let mut p = [0.0; 4];
    for kind in SignalType::ALL {
        p[kind.index()] = model.predict_usable(refset.get(kind))?;
    }
    Ok(RefProbs::from_array(p))
}

/// A per-epoch model state that passed the gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub run_id: String,
    pub epoch: usize,
    pub report: RangeReport,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ranking {
    /// Passing candidates by ascending distance; ties keep record order.
    pub candidates: Vec<Candidate>,
    /// Number of (run, epoch) states examined.
    pub total: usize,
}

impl Ranking {
    pub fn passing(&self) -> usize {
        self.candidates.len()
    }
}

/// Gate every (run, epoch) state and rank the ones that pass.
pub fn rank_models(records: &[RunRecord], spec: &ExpectedRangeSpec) -> Ranking {
    let mut total = 0;
    let mut candidates = Vec::new();
    for r in records {
        for e in &r.epochs {
            total += 1;
            let report = check_ranges(&e.ref_probs, spec);
            if report.pass {
                candidates.push(Candidate {
                    run_id: r.run_id.clone(),
                    epoch: e.epoch,
                    report,
                });
            }
        }
    }
    candidates.sort_by(|a, b| a.report.distance.total_cmp(&b.report.distance));
    Ranking { candidates, total }
}
