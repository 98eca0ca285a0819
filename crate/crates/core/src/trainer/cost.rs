//! Analytic model of data-parallel epoch time.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_CONSTANTS: &str = include_str!("../../config/cost_model.json");

/// Epoch time of synchronous data-parallel training on `W` workers:
///
/// `T = s_w·W + ceil(N/b)·(c_f·ceil(b/W) + c_c·ceil(log2 W) + c_0)`
///
/// Each step costs the slowest shard's compute, one tree-reduction level per
/// doubling of workers, and a fixed overhead; each worker adds setup time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingCostModel {
    /// Seconds of per-worker compute per sample.
    pub c_f: f64,
    /// Seconds per reduction-tree level.
    pub c_c: f64,
    /// Fixed seconds per step.
    pub c_0: f64,
    /// Setup seconds per worker per epoch.
    pub s_w: f64,
}

impl Default for ScalingCostModel {
    /// Constants shipped in `config/cost_model.json`.
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONSTANTS).expect("shipped cost model parses")
    }
}

impl ScalingCostModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.c_f, self.c_c, self.c_0, self.s_w];
        if all.iter().any(|c| !c.is_finite() || *c < 0.0) || self.c_f <= 0.0 {
            return Err(Error::Spec(format!(
                "cost constants must be finite and nonnegative with c_f > 0: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn from_json(doc: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(doc).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        m.validate()?;
        Ok(m)
    }

    /// Modeled seconds for one epoch.
    pub fn epoch_time(&self, workers: usize, n: usize, batch: usize) -> Result<f64> {
        self.validate()?;
        if workers == 0 || batch < workers || n < batch {
            return Err(Error::Spec(format!(
                "throughput needs N ≥ batch ≥ W ≥ 1, got N={n}, batch={batch}, W={workers}"
            )));
        }
        let steps = n.div_ceil(batch) as f64;
        let per_worker = batch.div_ceil(workers) as f64;
        let levels = ceil_log2(workers) as f64;
        Ok(self.s_w * workers as f64 + steps * (self.c_f * per_worker + self.c_c * levels + self.c_0))
    }
}

fn ceil_log2(x: usize) -> u32 {
    usize::BITS - (x - 1).leading_zeros()
}

/// Modeled samples per second.
pub fn model_throughput(m: &ScalingCostModel, workers: usize, n: usize, batch: usize) -> Result<f64> {
    Ok(n as f64 / m.epoch_time(workers, n, batch)?)
}

/// Worker count in `candidates` with the highest modeled throughput; ties go
/// to the smaller count.
pub fn best_workers(m: &ScalingCostModel, candidates: &[usize], n: usize, batch: usize) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &w in candidates {
        let t = model_throughput(m, w, n, batch)?;
        if best.is_none_or(|(_, bt)| t > bt) {
            best = Some((w, t));
        }
    }
    best.map(|(w, _)| w)
        .ok_or_else(|| Error::Spec("no worker counts to compare".into()))
}

/// Throughput ratio `t_large / t_small`.
pub fn speedup(t_small: f64, t_large: f64) -> Result<f64> {
    if !(t_small > 0.0 && t_large > 0.0) || !t_small.is_finite() || !t_large.is_finite() {
        return Err(Error::Spec(format!(
            "speedup needs positive throughputs, got {t_small} and {t_large}"
        )));
    }
    Ok(t_large / t_small)
}

/// Order-of-magnitude wording for a speedup ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeedupClass {
    Below,
    OneOrder,
    TwoOrders,
}

impl SpeedupClass {
    pub fn of(ratio: f64) -> Self {
        if ratio > 100.0 {
            SpeedupClass::TwoOrders
        } else if ratio > 10.0 {
            SpeedupClass::OneOrder
        } else {
            SpeedupClass::Below
        }
    }
}

impl fmt::Display for SpeedupClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpeedupClass::Below => "less than one order of magnitude",
            SpeedupClass::OneOrder => "more than one order of magnitude",
            SpeedupClass::TwoOrders => "more than two orders of magnitude",
        })
    }
}

/// One-line report text, e.g. `110.9x speedup (more than two orders of magnitude)`.
pub fn describe_speedup(ratio: f64) -> String {
    format!("{ratio:.1}x speedup ({})", SpeedupClass::of(ratio))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ideal(c_f: f64) -> ScalingCostModel {
        ScalingCostModel {
            c_f,
            c_c: 0.0,
            c_0: 0.0,
            s_w: 0.0,
        }
    }

    #[test]
    fn ideal_scaling_is_linear() {
        let m = ideal(1e-3);
        for w in [1, 2, 4, 8, 16, 32] {
            let t = model_throughput(&m, w, 4096, 512).unwrap();
            assert!((t - w as f64 / 1e-3).abs() < 1e-6 * t, "W={w}: {t}");
        }
    }

    #[test]
    fn single_worker_substitution() {
        let m = ScalingCostModel::default();
        let (n, b) = (1000, 128);
        let expect = n as f64 / (m.s_w + 8.0 * (m.c_f * b as f64 + m.c_0));
        assert_eq!(model_throughput(&m, 1, n, b).unwrap(), expect);
    }

    #[test]
    fn shipped_constants() {
        let m = ScalingCostModel::default();
        assert_eq!(
            m,
            ScalingCostModel {
                c_f: 1e-3,
                c_c: 4e-2,
                c_0: 5e-3,
                s_w: 0.5
            }
        );
    }

    #[test]
    fn ceil_log2_values() {
        let got: Vec<u32> = [1, 2, 3, 4, 5, 8, 9, 32].iter().map(|&x| ceil_log2(x)).collect();
        assert_eq!(got, vec![0, 1, 2, 2, 3, 3, 4, 5]);
    }

    #[test]
    fn invalid_sizes() {
        let m = ScalingCostModel::default();
        assert!(model_throughput(&m, 0, 100, 64).is_err());
        assert!(model_throughput(&m, 128, 1000, 64).is_err());
        assert!(model_throughput(&m, 2, 100, 128).is_err());
        let bad = ScalingCostModel { c_f: 0.0, ..m };
        assert!(model_throughput(&bad, 1, 100, 10).is_err());
    }

    #[test]
    fn speedup_values() {
        let r = speedup(65.0, 7210.0).unwrap();
        assert!((r - 110.923).abs() < 1e-3);
        assert_eq!(SpeedupClass::of(r), SpeedupClass::TwoOrders);
        assert_eq!(speedup(3.0, 3.0).unwrap(), 1.0);
        assert!(speedup(0.0, 1.0).is_err());
        assert!(speedup(-1.0, 1.0).is_err());
        assert_eq!(
            describe_speedup(r),
            "110.9x speedup (more than two orders of magnitude)"
        );
    }

    #[test]
    fn json_config() {
        let m = ScalingCostModel::from_json(r#"{"c_f":0.002,"c_c":0,"c_0":0,"s_w":0}"#).unwrap();
        assert_eq!(m, ideal(0.002));
        assert!(matches!(
            ScalingCostModel::from_json("{\"c_f\":1}"),
            Err(Error::Parse { .. })
        ));
    }

    proptest! {
        #[test]
        fn throughput_nonincreasing_in_each_constant(
            c in prop::array::uniform4(0.0f64..1.0),
            bump in 0.0f64..1.0,
            which in 0usize..4,
            w in prop::sample::select(vec![1usize, 2, 4, 8, 16, 32]),
            n in 512usize..60000,
            b in prop::sample::select(vec![64usize, 128, 256, 512]),
        ) {
            let base = ScalingCostModel { c_f: c[0] + 1e-6, c_c: c[1], c_0: c[2], s_w: c[3] };
            let mut more = base;
            match which {
                0 => more.c_f += bump,
                1 => more.c_c += bump,
                2 => more.c_0 += bump,
                _ => more.s_w += bump,
            }
            prop_assume!(w <= b && b <= n);
            prop_assert!(model_throughput(&more, w, n, b).unwrap() <= model_throughput(&base, w, n, b).unwrap());
        }
    }
}
