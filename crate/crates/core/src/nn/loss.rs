//! Classification heads: two-way softmax cross-entropy and one-logit
//! sigmoid binary cross-entropy. Both report `p_usable`, the probability of
//! the coherent class.

use super::{Scalar, Tensor4};
use crate::error::{Error, Result};

/// Loss and usable-energy probability for one width-2 logit pair.
pub fn softmax_ce<T: Scalar>(logits: [T; 2], label: u8) -> (T, T) {
    let (z0, z1) = (logits[0], logits[1]);
    let m = z0.max(z1);
    let tail = (z0.min(z1) - m).exp().ln_1p();
    let lse = m + tail;
    let target = if label == 1 { z1 } else { z0 };
    let loss = (m - target) + tail;
    (loss, (z1 - lse).exp())
}

/// Loss and probability for a single logit.
pub fn sigmoid_bce<T: Scalar>(logit: T, label: u8) -> (T, T) {
    let y = if label == 1 { T::one() } else { T::zero() };
    let loss = logit.max(T::zero()) - logit * y + (-logit.abs()).exp().ln_1p();
    (loss, sigmoid(logit))
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// `p_usable` for one row of logits of width 1 or 2.
pub fn usable_probability<T: Scalar>(row: &[T]) -> Result<T> {
    match row {
        [z] => Ok(sigmoid(*z)),
        [z0, z1] => Ok(softmax_ce([*z0, *z1], 1).1),
        _ => Err(Error::Shape(format!("head width must be 1 or 2, got {}", row.len()))),
    }
}

#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    /// Mean loss over the batch.
    pub loss: T,
    /// Gradient of the mean loss w.r.t. the logits.
    pub dlogits: Tensor4<T>,
    pub p_usable: Vec<T>,
}

pub fn classification_loss<T: Scalar>(logits: &Tensor4<T>, labels: &[u8]) -> Result<LossOutput<T>> {
    let width = logits.item_len();
    if labels.len() != logits.n {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {}",
            labels.len(),
            logits.n
        )));
    }
    let inv_n = T::one() / T::of(logits.n as f64);
    let mut dlogits = Tensor4::zeros(logits.n, width, 1, 1);
    let mut p_usable = Vec::with_capacity(logits.n);
    let mut total = T::zero();
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.item(i);
        let grad = &mut dlogits.data[i * width..(i + 1) * width];
        match width {
            1 => {
                let (loss, p) = sigmoid_bce(row[0], label);
                total += loss;
                grad[0] = (p - T::of(label as f64)) * inv_n;
                p_usable.push(p);
            }
            2 => {
                let (loss, p) = softmax_ce([row[0], row[1]], label);
                total += loss;
                let y1 = T::of(label as f64);
                grad[1] = (p - y1) * inv_n;
                grad[0] = ((T::one() - p) - (T::one() - y1)) * inv_n;
                p_usable.push(p);
            }
            w => return Err(Error::Shape(format!("head width must be 1 or 2, got {w}"))),
        }
    }
    Ok(LossOutput {
        loss: total * inv_n,
        dlogits,
        p_usable,
    })
}
