//! Batch sharding and fixed-order tree reduction.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::nn::{BatchStats, Grads, Scalar};

/// Contiguous position ranges splitting `len` items over `workers` shards.
/// Sizes differ by at most one; the first `len % workers` shards are larger.
pub fn shard_ranges(len: usize, workers: usize) -> Result<Vec<Range<usize>>> {
    if workers == 0 {
        return Err(Error::Spec("cannot shard over zero workers".into()));
    }
    if workers > len {
        return Err(Error::Spec(format!("{workers} workers exceed batch of {len}")));
    }
    let (base, extra) = (len / workers, len % workers);
    let mut start = 0;
    Ok((0..workers)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect())
}

/// Split `items` in order into `workers` shards.
pub fn shard<X>(items: &[X], workers: usize) -> Result<Vec<&[X]>> {
    Ok(shard_ranges(items.len(), workers)?
        .into_iter()
        .map(|r| &items[r])
        .collect())
}

/// Combine neighbours pairwise (0+1, 2+3, ...) level by level; an odd
/// trailing element is carried up unchanged. The combination order depends
/// only on `items.len()`.
pub fn tree_reduce<X>(items: Vec<X>, mut combine: impl FnMut(X, X) -> Result<X>) -> Result<X> {
    if items.is_empty() {
        return Err(Error::Spec("nothing to reduce".into()));
    }
    let mut level = items;
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        let mut it = level.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)?),
                None => next.push(a),
            }
        }
        level = next;
    }
    Ok(level.pop().expect("non-empty level"))
}

/// Sum of gradient sets that were each pre-weighted by their shard's
/// fraction of the batch, i.e. the batch-mean gradient.
pub fn tree_reduce_mean<T: Scalar>(grad_sets: Vec<Grads<T>>) -> Result<Grads<T>> {
    tree_reduce(grad_sets, |mut a, b| {
        a.add_assign(&b)?;
        Ok(a)
    })
}

/// Moments accumulated for pooling per-shard normalization statistics.
#[derive(Debug, Clone)]
struct Moments {
    weight: f64,
    mean: Vec<f64>,
    second: Vec<f64>,
    count: usize,
}

/// Pool per-shard batch statistics into the statistics of the union, as if
/// the whole batch had been normalized at once. Shards are weighted by
/// element count.
pub fn pool_batch_stats<T: Scalar>(shards: &[Vec<BatchStats<T>>]) -> Result<Vec<BatchStats<T>>> {
    let Some(first) = shards.first() else {
        return Err(Error::Spec("no statistics to pool".into()));
    };
    let layers = first.len();
    if shards.iter().any(|s| s.len() != layers) {
        return Err(Error::Shape(
            "workers recorded different numbers of normalization layers".into(),
        ));
    }
    (0..layers)
        .map(|l| {
            let parts: Vec<Moments> = shards
                .iter()
                .map(|s| {
                    let st = &s[l];
                    Moments {
                        weight: st.count as f64,
                        mean: st.mean.iter().map(|m| m.as_f64()).collect(),
                        second: st
                            .var
                            .iter()
                            .zip(&st.mean)
                            .map(|(v, m)| v.as_f64() + m.as_f64().powi(2))
                            .collect(),
                        count: st.count,
                    }
                })
                .collect();
            let channels = parts[0].mean.len();
            if parts.iter().any(|p| p.mean.len() != channels) {
                return Err(Error::Shape(format!("layer {l}: channel counts differ across workers")));
            }
            let total = tree_reduce(parts, |a, b| {
                let w = a.weight + b.weight;
                let (fa, fb) = (a.weight / w, b.weight / w);
                Ok(Moments {
                    weight: w,
                    mean: a.mean.iter().zip(&b.mean).map(|(x, y)| fa * x + fb * y).collect(),
                    second: a.second.iter().zip(&b.second).map(|(x, y)| fa * x + fb * y).collect(),
                    count: a.count + b.count,
                })
            })?;
            Ok(BatchStats {
                mean: total.mean.iter().map(|&m| T::of(m)).collect(),
                var: total
                    .second
                    .iter()
                    .zip(&total.mean)
                    .map(|(s, m)| T::of((s - m * m).max(0.0)))
                    .collect(),
                count: total.count,
            })
        })
        .collect()
}
