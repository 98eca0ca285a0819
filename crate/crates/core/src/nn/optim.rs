use super::{Grads, ParamSet, Scalar};
use crate::error::{Error, Result};

/// SGD with heavy-ball momentum: `v ← μ·v + g; θ ← θ − η·v`.
#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub lr: f64,
    pub momentum: f64,
    velocity: Option<Grads<T>>,
}

impl<T: Scalar> Sgd<T> {
    pub fn new(lr: f64, momentum: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Spec(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Spec(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Sgd {
            lr,
            momentum,
            velocity: None,
        })
    }

    /// Apply one update. Parameters are left untouched when any gradient is
    /// non-finite.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &Grads<T>) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        let lr = T::of(self.lr);
        if self.momentum == 0.0 {
            for (p, g) in params.tensors.iter_mut().zip(&grads.tensors) {
                for (x, &d) in p.data.iter_mut().zip(g) {
                    *x -= lr * d;
                }
            }
            return Ok(());
        }
        let mu = T::of(self.momentum);
        let velocity = self.velocity.get_or_insert_with(|| params.zeros_like());
        if !velocity.compatible(grads) {
            return Err(Error::Shape("gradient layout changed between steps".into()));
        }
        for ((p, v), g) in params.tensors.iter_mut().zip(&mut velocity.tensors).zip(&grads.tensors) {
            for ((x, vel), &d) in p.data.iter_mut().zip(v.iter_mut()).zip(g) {
                *vel = mu * *vel + d;
                *x -= lr * *vel;
            }
        }
        Ok(())
    }
}
