use std::rc::Rc;

use super::norm::{BatchStats, NormCache};
use super::Tensor4;
use crate::error::{Error, Result};

/// Activation cache for one executed forward op.
#[derive(Debug)]
pub enum Cache<T> {
    Conv { input: Rc<Tensor4<T>> },
    Norm(NormCache<T>),
    Relu { output: Rc<Tensor4<T>> },
    Pool { h: usize, w: usize },
    Linear { input: Tensor4<T> },
}

impl<T> Cache<T> {
    fn kind(&self) -> &'static str {
        match self {
            Cache::Conv { .. } => "conv",
            Cache::Norm(_) => "norm",
            Cache::Relu { .. } => "relu",
            Cache::Pool { .. } => "pool",
            Cache::Linear { .. } => "linear",
        }
    }
}

/// Record of a training-mode forward pass, consumed once by backward.
#[derive(Debug)]
pub struct Tape<T> {
    entries: Vec<Cache<T>>,
    /// Batch statistics of every normalization layer, in execution order.
    pub norm_stats: Vec<BatchStats<T>>,
    consumed: bool,
}

impl<T> Default for Tape<T> {
    fn default() -> Self {
        Tape {
            entries: Vec::new(),
            norm_stats: Vec::new(),
            consumed: false,
        }
    }
}

impl<T> Tape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, cache: Cache<T>) {
        self.entries.push(cache);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Activity pattern of every ReLU on the tape, concatenated in execution
    /// order. Two passes share a differentiable region iff their masks agree.
    pub fn relu_mask(&self) -> Vec<bool>
    where
        T: crate::nn::Scalar,
    {
        self.entries
            .iter()
            .filter_map(|e| match e {
                Cache::Relu { output } => Some(output.data.iter().map(|v| *v > T::zero())),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Mark the tape as being replayed; a second replay is a state error.
    pub fn begin_backward(&mut self) -> Result<()> {
        if self.consumed {
            return Err(Error::State("tape already consumed by a backward pass".into()));
        }
        self.consumed = true;
        Ok(())
    }

    pub fn pop(&mut self) -> Result<Cache<T>> {
        self.entries
            .pop()
            .ok_or_else(|| Error::State("tape exhausted before backward finished".into()))
    }

    pub fn pop_conv(&mut self) -> Result<Rc<Tensor4<T>>> {
        match self.pop()? {
            Cache::Conv { input } => Ok(input),
            other => Err(mismatch("conv", &other)),
        }
    }

    pub fn pop_norm(&mut self) -> Result<NormCache<T>> {
        match self.pop()? {
            Cache::Norm(c) => Ok(c),
            other => Err(mismatch("norm", &other)),
        }
    }

    pub fn pop_relu(&mut self) -> Result<Rc<Tensor4<T>>> {
        match self.pop()? {
            Cache::Relu { output } => Ok(output),
            other => Err(mismatch("relu", &other)),
        }
    }

    pub fn pop_pool(&mut self) -> Result<(usize, usize)> {
        match self.pop()? {
            Cache::Pool { h, w } => Ok((h, w)),
            other => Err(mismatch("pool", &other)),
        }
    }

    pub fn pop_linear(&mut self) -> Result<Tensor4<T>> {
        match self.pop()? {
            Cache::Linear { input } => Ok(input),
            other => Err(mismatch("linear", &other)),
        }
    }

    /// Confirm the replay used every entry.
    pub fn finish(&self) -> Result<()> {
        if !self.entries.is_empty() {
            return Err(Error::State(format!(
                "{} tape entries left after backward",
                self.entries.len()
            )));
        }
        Ok(())
    }
}

fn mismatch<T>(expected: &str, found: &Cache<T>) -> Error {
    Error::State(format!(
        "tape out of order: expected {expected}, found {}",
        found.kind()
    ))
}
