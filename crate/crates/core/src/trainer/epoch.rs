//! Synchronous data-parallel SGD.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::reduce::{pool_batch_stats, shard_ranges, tree_reduce_mean};
use crate::error::{Error, Result};
use crate::nn::{Grads, Scalar, Sgd, Tensor4};
use crate::resnet::Model;
use crate::rng::{mix64, seeded, stream};
use crate::selection::eval_reference;
use crate::synth::{DataSource, ReferenceSet, SignalType};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub workers: usize,
    /// Global batch size, split across workers every step.
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Spec("at least one worker is required".into()));
        }
        if self.batch < self.workers {
            return Err(Error::Spec(format!(
                "batch {} is smaller than worker count {}",
                self.batch, self.workers
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Spec("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Spec(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Spec(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }

    /// Optimizer steps per epoch over `n` samples.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch)
    }
}

/// Usable-energy probability for each reference signal type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefProbs {
    pub white_noise: f64,
    pub coherent: f64,
    pub noncoherent: f64,
    pub saturated: f64,
}

impl RefProbs {
    /// In [`SignalType::ALL`] order.
    pub fn from_array(p: [f64; 4]) -> Self {
        RefProbs {
            white_noise: p[0],
            coherent: p[1],
            noncoherent: p[2],
            saturated: p[3],
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.white_noise, self.coherent, self.noncoherent, self.saturated]
    }

    pub fn get(&self, kind: SignalType) -> f64 {
        self.to_array()[kind.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    pub samples_per_sec: f64,
    /// Seconds spent in sharding, compute, reduction and update.
    pub wall_time_s: f64,
    pub ref_probs: RefProbs,
}

/// Owns one model, its optimizer state and a pool of `workers` threads.
///
/// Every step the global batch is sharded, each worker computes the mean
/// loss gradient of its shard against the shared parameters, the gradients
/// are weighted by shard fraction and tree-reduced, and a single SGD update
/// is applied to the canonical parameters. Normalization runs per worker;
/// running statistics receive the pooled statistics of the whole batch.
pub struct Trainer<T: Scalar> {
    pub model: Model<T>,
    cfg: TrainConfig,
    sgd: Sgd<T>,
    pool: rayon::ThreadPool,
    epochs_done: usize,
}

struct ShardResult<T> {
    weighted_loss: f64,
    grads: Grads<T>,
    stats: Vec<crate::nn::BatchStats<T>>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Model<T>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .thread_name(|i| format!("worker-{i}"))
            .build()
            .map_err(|e| Error::Spec(format!("cannot start {} workers: {e}", cfg.workers)))?;
        let sgd = Sgd::new(cfg.lr, cfg.momentum)?;
        Ok(Trainer {
            model,
            cfg,
            sgd,
            pool,
            epochs_done: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    fn check_modes<D: DataSource + ?Sized>(&self, data: &D, refset: &ReferenceSet) -> Result<()> {
        let want = self.model.arch.in_channels;
        if data.mode().channels() != want || refset.mode().channels() != want {
            return Err(Error::Shape(format!(
                "model expects {want} channels, dataset is {} and reference set is {}",
                data.mode(),
                refset.mode()
            )));
        }
        Ok(())
    }

    /// Epoch-specific permutation of `0..n`.
    fn permutation(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = seeded(mix64(mix64(self.cfg.seed, stream::SHUFFLE), epoch as u64));
        idx.shuffle(&mut rng);
        idx
    }

    fn gather<D: DataSource + ?Sized>(&self, data: &D, indices: &[usize]) -> Result<(Vec<f32>, Vec<u8>)> {
        let stride = data.item_len();
        let mut buf = vec![0f32; indices.len() * stride];
        let labels = self.pool.install(|| {
            buf.par_chunks_mut(stride)
                .zip(indices.par_iter())
                .map(|(out, &i)| data.write_item(i, out))
                .collect::<Result<Vec<u8>>>()
        })?;
        Ok((buf, labels))
    }

    fn step(&mut self, buf: &[f32], labels: &[u8], dims: [usize; 3]) -> Result<f64> {
        let len = labels.len();
        let ranges = shard_ranges(len, self.cfg.workers.min(len))?;
        let [c, h, w] = dims;
        let stride = c * h * w;
        let model = &self.model;
        let results = self.pool.install(|| {
            ranges
                .par_iter()
                .map(|r| {
                    let x = Tensor4::<T>::from_f32(r.len(), c, h, w, &buf[r.start * stride..r.end * stride])?;
                    let (loss, mut grads, stats) = model.loss_and_grad(&x, &labels[r.clone()])?;
                    let frac = r.len() as f64 / len as f64;
                    grads.scale(T::of(frac));
                    Ok(ShardResult {
                        weighted_loss: loss.as_f64() * frac,
                        grads,
                        stats,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let loss: f64 = results.iter().map(|r| r.weighted_loss).sum();
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite training loss {loss}")));
        }
        let mut grad_sets = Vec::with_capacity(results.len());
        let mut stat_sets = Vec::with_capacity(results.len());
        for r in results {
            grad_sets.push(r.grads);
            stat_sets.push(r.stats);
        }
        let grads = tree_reduce_mean(grad_sets)?;
        self.sgd.step(&mut self.model.params, &grads)?;
        if self.model.norm_layers() > 0 {
            let pooled = pool_batch_stats(&stat_sets)?;
            self.model.update_running(&pooled)?;
        }
        Ok(loss)
    }

    /// One pass over `data` followed by evaluation on `refset`.
    ///
    /// Only the step loop is timed; assembling each batch from the data
    /// source and the reference evaluation are excluded.
    pub fn train_epoch<D: DataSource + ?Sized>(&mut self, data: &D, refset: &ReferenceSet) -> Result<EpochStats> {
        self.check_modes(data, refset)?;
        let n = data.len();
        if n == 0 {
            return Err(Error::Data("cannot train on an empty dataset".into()));
        }
        let epoch = self.epochs_done + 1;
        let spec = data.patch_spec();
        let dims = [data.mode().channels(), spec.n_time, spec.n_chan];
        let order = self.permutation(n, epoch);
        let mut elapsed = Duration::ZERO;
        let mut loss_sum = 0.0;
        for batch in order.chunks(self.cfg.batch) {
            let (buf, labels) = self.gather(data, batch)?;
            let t0 = Instant::now();
            let loss = self.step(&buf, &labels, dims)?;
            elapsed += t0.elapsed();
            loss_sum += loss * batch.len() as f64;
        }
        self.epochs_done = epoch;
        let ref_probs = eval_reference(&self.model, refset)?;
        if ref_probs.to_array().iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite reference probabilities {ref_probs:?}"
            )));
        }
        let wall = elapsed.as_secs_f64().max(f64::MIN_POSITIVE);
        log::debug!(
            "epoch {epoch}: loss {:.5}, {:.1} samples/s",
            loss_sum / n as f64,
            n as f64 / wall
        );
        Ok(EpochStats {
            epoch,
            loss: loss_sum / n as f64,
            samples_per_sec: n as f64 / wall,
            wall_time_s: wall,
            ref_probs,
        })
    }
}
