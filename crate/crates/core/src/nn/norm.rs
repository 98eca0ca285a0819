//! Per-channel batch normalization.

use super::{Scalar, Tensor4};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
/// Weight of the newest batch in the running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Train,
    Eval,
}

/// Per-channel statistics of one training batch (biased variance).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// Elements per channel that produced the statistics.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    /// Exponential moving average; the running variance is unbiased.
    pub fn update(&mut self, stats: &BatchStats<T>, momentum: f64) {
        let m = T::of(momentum);
        let keep = T::one() - m;
        let bessel = if stats.count > 1 {
            T::of(stats.count as f64 / (stats.count - 1) as f64)
        } else {
            T::one()
        };
        for c in 0..self.mean.len() {
            self.mean[c] = keep * self.mean[c] + m * stats.mean[c];
            self.var[c] = keep * self.var[c] + m * stats.var[c] * bessel;
        }
    }
}

#[derive(Debug, Clone)]
pub struct NormCache<T> {
    pub xhat: Tensor4<T>,
    pub inv_std: Vec<T>,
}

fn check_affine<T: Scalar>(x: &Tensor4<T>, scale: &[T], shift: &[T]) -> Result<()> {
    if scale.len() != x.c || shift.len() != x.c {
        return Err(Error::Shape(format!(
            "normalization over {} channels given {} scales and {} shifts",
            x.c,
            scale.len(),
            shift.len()
        )));
    }
    Ok(())
}

/// Normalize with the batch's own statistics.
pub fn batchnorm_train<T: Scalar>(
    x: &Tensor4<T>,
    scale: &[T],
    shift: &[T],
    eps: f64,
) -> Result<(Tensor4<T>, NormCache<T>, BatchStats<T>)> {
    check_affine(x, scale, shift)?;
    let plane = x.plane();
    let count = x.n * plane;
    if count < 2 {
        return Err(Error::Shape(format!(
            "training-mode normalization needs at least 2 values per channel, got {count}"
        )));
    }
    let mut mean = vec![T::zero(); x.c];
    let mut var = vec![T::zero(); x.c];
    let mut inv_std = vec![T::zero(); x.c];
    for c in 0..x.c {
        let chunks = (0..x.n).map(|i| &x.data[(i * x.c + c) * plane..(i * x.c + c + 1) * plane]);
        let sum: f64 = chunks.clone().flatten().map(|v| v.as_f64()).sum();
        let mu = sum / count as f64;
        let sq: f64 = chunks.flatten().map(|v| (v.as_f64() - mu).powi(2)).sum();
        let sigma2 = sq / count as f64;
        mean[c] = T::of(mu);
        var[c] = T::of(sigma2);
        inv_std[c] = T::of(1.0 / (sigma2 + eps).sqrt());
    }
    let mut xhat = Tensor4::zeros(x.n, x.c, x.h, x.w);
    let mut y = Tensor4::zeros(x.n, x.c, x.h, x.w);
    for i in 0..x.n {
        for c in 0..x.c {
            let r = (i * x.c + c) * plane..(i * x.c + c + 1) * plane;
            let (mu, is, g, b) = (mean[c], inv_std[c], scale[c], shift[c]);
            for ((xh, yv), &xv) in xhat.data[r.clone()]
                .iter_mut()
                .zip(&mut y.data[r.clone()])
                .zip(&x.data[r])
            {
                *xh = (xv - mu) * is;
                *yv = g * *xh + b;
            }
        }
    }
    Ok((y, NormCache { xhat, inv_std }, BatchStats { mean, var, count }))
}

/// Normalize with frozen running statistics.
pub fn batchnorm_eval<T: Scalar>(
    x: &Tensor4<T>,
    scale: &[T],
    shift: &[T],
    running: &RunningStats<T>,
    eps: f64,
) -> Result<Tensor4<T>> {
    check_affine(x, scale, shift)?;
    if running.mean.len() != x.c {
        return Err(Error::Shape("running statistics channel mismatch".into()));
    }
    let plane = x.plane();
    let mut y = x.clone();
    for i in 0..x.n {
        for c in 0..x.c {
            let is = T::one() / (running.var[c] + T::of(eps)).sqrt();
            let (mu, g, b) = (running.mean[c], scale[c], shift[c]);
            for v in &mut y.data[(i * x.c + c) * plane..(i * x.c + c + 1) * plane] {
                *v = g * (*v - mu) * is + b;
            }
        }
    }
    Ok(y)
}

/// Mode-dispatching normalization; training mode folds the batch statistics
/// into `running`.
pub fn batchnorm<T: Scalar>(
    x: &Tensor4<T>,
    scale: &[T],
    shift: &[T],
    running: &mut RunningStats<T>,
    mode: NormMode,
    eps: f64,
) -> Result<Tensor4<T>> {
    match mode {
        NormMode::Train => {
            let (y, _, stats) = batchnorm_train(x, scale, shift, eps)?;
            running.update(&stats, BN_MOMENTUM);
            Ok(y)
        }
        NormMode::Eval => batchnorm_eval(x, scale, shift, running, eps),
    }
}

pub fn batchnorm_backward<T: Scalar>(
    dy: &Tensor4<T>,
    cache: &NormCache<T>,
    scale: &[T],
    dscale: &mut [T],
    dshift: &mut [T],
) -> Result<Tensor4<T>> {
    let xhat = &cache.xhat;
    if !dy.same_shape(xhat) {
        return Err(Error::Shape("normalization gradient shape mismatch".into()));
    }
    let plane = dy.plane();
    let count = T::of((dy.n * plane) as f64);
    let mut dx = Tensor4::zeros(dy.n, dy.c, dy.h, dy.w);
    for c in 0..dy.c {
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for i in 0..dy.n {
            let r = (i * dy.c + c) * plane..(i * dy.c + c + 1) * plane;
            for (&g, &xh) in dy.data[r.clone()].iter().zip(&xhat.data[r]) {
                sum_dy += g;
                sum_dy_xhat += g * xh;
            }
        }
        dscale[c] += sum_dy_xhat;
        dshift[c] += sum_dy;
        let k = scale[c] * cache.inv_std[c] / count;
        for i in 0..dy.n {
            let r = (i * dy.c + c) * plane..(i * dy.c + c + 1) * plane;
            for ((d, &g), &xh) in dx.data[r.clone()]
                .iter_mut()
                .zip(&dy.data[r.clone()])
                .zip(&xhat.data[r])
            {
                *d = k * (count * g - sum_dy - xh * sum_dy_xhat);
            }
        }
    }
    Ok(dx)
}
