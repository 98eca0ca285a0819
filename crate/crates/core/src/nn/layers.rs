//! Elementwise, pooling and dense layers.

use super::scalar::{gemm, MatRef};
use super::{Scalar, Tensor4};
use crate::error::{Error, Result};

pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient through a ReLU given its forward output.
pub fn relu_backward<T: Scalar>(dy: &Tensor4<T>, output: &Tensor4<T>) -> Result<Tensor4<T>> {
    if !dy.same_shape(output) {
        return Err(Error::Shape("relu gradient shape mismatch".into()));
    }
    let data = dy
        .data
        .iter()
        .zip(&output.data)
        .map(|(&g, &o)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor4::from_vec(dy.n, dy.c, dy.h, dy.w, data)
}

/// Spatial mean per channel: `n×c×h×w → n×c×1×1`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let plane = x.plane();
    let inv = T::one() / T::of(plane as f64);
    let data = x
        .data
        .chunks_exact(plane)
        .map(|ch| ch.iter().copied().sum::<T>() * inv)
        .collect();
    Tensor4 {
        n: x.n,
        c: x.c,
        h: 1,
        w: 1,
        data,
    }
}

pub fn global_avg_pool_backward<T: Scalar>(dy: &Tensor4<T>, h: usize, w: usize) -> Tensor4<T> {
    let inv = T::one() / T::of((h * w) as f64);
    let mut dx = Tensor4::zeros(dy.n, dy.c, h, w);
    for (dst, &g) in dx.data.chunks_exact_mut(h * w).zip(&dy.data) {
        dst.fill(g * inv);
    }
    dx
}

/// `y = x·Wᵀ + b` with `W` stored `out × in`; `x` is flattened per item.
pub fn linear<T: Scalar>(x: &Tensor4<T>, weight: &[T], bias: &[T]) -> Result<Tensor4<T>> {
    let fan_in = x.item_len();
    let out = bias.len();
    if weight.len() != out * fan_in {
        return Err(Error::Shape(format!(
            "linear weight has {} values, expected {out}x{fan_in}",
            weight.len()
        )));
    }
    let mut y = Tensor4::zeros(x.n, out, 1, 1);
    for row in y.data.chunks_exact_mut(out) {
        row.copy_from_slice(bias);
    }
    gemm(
        MatRef::new(&x.data, x.n, fan_in),
        MatRef::new(weight, out, fan_in).t(),
        T::one(),
        &mut y.data,
    );
    Ok(y)
}

pub fn linear_backward<T: Scalar>(
    dy: &Tensor4<T>,
    x: &Tensor4<T>,
    weight: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
) -> Result<Tensor4<T>> {
    let fan_in = x.item_len();
    let out = dbias.len();
    if dy.n != x.n || dy.item_len() != out || dweight.len() != out * fan_in {
        return Err(Error::Shape("linear gradient shape mismatch".into()));
    }
    for row in dy.data.chunks_exact(out) {
        for (db, &g) in dbias.iter_mut().zip(row) {
            *db += g;
        }
    }
    gemm(
        MatRef::new(&dy.data, x.n, out).t(),
        MatRef::new(&x.data, x.n, fan_in),
        T::one(),
        dweight,
    );
    let mut dx = Tensor4::zeros(x.n, x.c, x.h, x.w);
    gemm(
        MatRef::new(&dy.data, x.n, out),
        MatRef::new(weight, out, fan_in),
        T::zero(),
        &mut dx.data,
    );
    Ok(dx)
}
