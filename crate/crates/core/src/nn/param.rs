use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    pub tensors: Vec<Param<T>>,
}

/// Addresses one scalar inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamCoord {
    pub tensor: usize,
    pub index: usize,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { tensors: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<T>) -> usize {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.tensors.push(Param {
            name: name.into(),
            shape,
            data,
        });
        self.tensors.len() - 1
    }

    pub fn get(&self, idx: usize) -> &[T] {
        &self.tensors[idx].data
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut [T] {
        &mut self.tensors[idx].data
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(|p| p.data.len()).sum()
    }

    pub fn coords(&self) -> impl Iterator<Item = ParamCoord> + '_ {
        self.tensors
            .iter()
            .enumerate()
            .flat_map(|(t, p)| (0..p.data.len()).map(move |i| ParamCoord { tensor: t, index: i }))
    }

    pub fn at(&self, c: ParamCoord) -> T {
        self.tensors[c.tensor].data[c.index]
    }

    pub fn set(&mut self, c: ParamCoord, v: T) {
        self.tensors[c.tensor].data[c.index] = v;
    }

    pub fn flatten(&self) -> Vec<T> {
        self.tensors.iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    pub fn zeros_like(&self) -> Grads<T> {
        Grads {
            tensors: self.tensors.iter().map(|p| vec![T::zero(); p.data.len()]).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|p| p.data.iter().all(|v| v.is_finite()))
    }
}

/// Gradient accumulators mirroring a [`ParamSet`]'s layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, idx: usize) -> &[T] {
        &self.tensors[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut [T] {
        &mut self.tensors[idx]
    }

    pub fn at(&self, c: ParamCoord) -> T {
        self.tensors[c.tensor][c.index]
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Vec::len).sum()
    }

    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }

    pub fn compatible(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| a.len() == b.len())
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if !self.compatible(other) {
            return Err(Error::Shape("gradient sets have different layouts".into()));
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn flatten(&self) -> Vec<T> {
        self.tensors.iter().flatten().copied().collect()
    }
}
