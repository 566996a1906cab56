use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Constant(f32),
    /// Uniform in `[-a, a]`.
    Uniform(f32),
    /// Normal with standard deviation `sqrt(2 / fan_in)`.
    He { fan_in: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Flat registry of named parameter tensors. Layers hold `ParamId`s into it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut Rng) -> ParamId {
        let len = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; len],
            Init::Constant(v) => vec![v; len],
            Init::Uniform(a) => (0..len).map(|_| rng.random_range(-a..=a)).collect(),
            Init::He { fan_in } => {
                let n = Normal::new(0.0, (2.0 / fan_in.max(1) as f32).sqrt()).unwrap();
                (0..len).map(|_| n.sample(rng)).collect()
            }
        };
        self.tensors.push(Tensor {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        });
        ParamId(self.tensors.len() - 1)
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &[f32] {
        &self.tensors[id.0].data
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f32] {
        &mut self.tensors[id.0].data
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.tensors.iter().position(|t| t.name == name).map(ParamId)
    }

    /// Replaces all values from `other`, which must have identical names and
    /// shapes in the same order.
    pub fn load_from(&mut self, other: Vec<Tensor>) -> Result<()> {
        if other.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                self.tensors.len(),
                other.len()
            )));
        }
        for (mine, theirs) in self.tensors.iter_mut().zip(other) {
            if mine.name != theirs.name || mine.shape != theirs.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor mismatch: expected {} {:?}, found {} {:?}",
                    mine.name, mine.shape, theirs.name, theirs.shape
                )));
            }
            if theirs.data.len() != mine.data.len() {
                return Err(Error::Checkpoint(format!("tensor {} has wrong length", mine.name)));
            }
            mine.data = theirs.data;
        }
        Ok(())
    }
}

/// Gradient buffers matching a `ParamStore`, allocated on first touch.
#[derive(Debug, Clone, Default)]
pub struct Grads {
    slots: Vec<Option<Vec<f32>>>,
}

impl Grads {
    pub fn new(store: &ParamStore) -> Self {
        Self {
            slots: vec![None; store.len()],
        }
    }

    pub fn slot(&mut self, id: ParamId, len: usize) -> &mut [f32] {
        if id.0 >= self.slots.len() {
            self.slots.resize(id.0 + 1, None);
        }
        self.slots[id.0].get_or_insert_with(|| vec![0.0; len])
    }

    pub fn get(&self, id: ParamId) -> Option<&[f32]> {
        self.slots.get(id.0).and_then(|s| s.as_deref())
    }

    /// `self += other`, slot by slot.
    pub fn accumulate(&mut self, other: &Grads) {
        if other.slots.len() > self.slots.len() {
            self.slots.resize(other.slots.len(), None);
        }
        for (mine, theirs) in self.slots.iter_mut().zip(&other.slots) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => m.iter_mut().zip(t).for_each(|(a, b)| *a += b),
                    None => *mine = Some(t.clone()),
                }
            }
        }
    }

    pub fn scale(&mut self, k: f32) {
        for s in self.slots.iter_mut().flatten() {
            s.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &[f32])> {
        self.slots
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_deref().map(|s| (ParamId(i), s)))
    }

    pub fn dense(&self, store: &ParamStore) -> Vec<Vec<f32>> {
        store
            .tensors()
            .iter()
            .enumerate()
            .map(|(i, t)| {
                self.slots
                    .get(i)
                    .and_then(|s| s.clone())
                    .unwrap_or_else(|| vec![0.0; t.data.len()])
            })
            .collect()
    }
}
