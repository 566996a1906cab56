use rand::Rng as _;

use super::ops::{affine, affine_backward_input, gemm};
use super::params::{Grads, Init, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// `concat → dense + ReLU → dropout → linear classifier`.
#[derive(Debug, Clone)]
pub struct FusionHead {
    pub input: usize,
    pub units: usize,
    pub classes: usize,
    pub dropout: f32,
    dense_w: ParamId,
    dense_b: ParamId,
    cls_w: ParamId,
    cls_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    x: Vec<f32>,
    relu: Vec<f32>,
    mask: Option<Vec<f32>>,
}

#[derive(Debug, Clone)]
pub struct HeadOutput {
    pub logits: Vec<f32>,
    /// Input to the classifier (after dropout).
    pub features: Vec<f32>,
    pub cache: HeadCache,
}

impl FusionHead {
    pub fn new(store: &mut ParamStore, input: usize, units: usize, classes: usize, dropout: f32, rng: &mut Rng) -> Self {
        Self {
            input,
            units,
            classes,
            dropout,
            dense_w: store.add("head.dense.w", &[units, input], Init::He { fan_in: input }, rng),
            dense_b: store.add("head.dense.b", &[units], Init::Zeros, rng),
            cls_w: store.add(
                "head.classifier.w",
                &[classes, units],
                Init::Uniform(1.0 / (units as f32).sqrt()),
                rng,
            ),
            cls_b: store.add("head.classifier.b", &[classes], Init::Zeros, rng),
        }
    }

    pub fn classifier_ids(&self) -> (ParamId, ParamId) {
        (self.cls_w, self.cls_b)
    }

    /// Inverted dropout when `rng` is present; identity otherwise.
    pub fn forward(&self, store: &ParamStore, x: &[f32], rng: Option<&mut Rng>) -> Result<HeadOutput> {
        if x.len() != self.input {
            return Err(Error::Shape(format!(
                "fusion head expects {} features, got {}",
                self.input,
                x.len()
            )));
        }
        let mut relu = affine(store.get(self.dense_w), store.get(self.dense_b), x, self.units);
        relu.iter_mut().for_each(|v| *v = v.max(0.0));
        let mask = rng.filter(|_| self.dropout > 0.0).map(|r| {
            let keep = 1.0 - self.dropout;
            (0..self.units)
                .map(|_| if r.random::<f32>() < keep { 1.0 / keep } else { 0.0 })
                .collect::<Vec<f32>>()
        });
        let features: Vec<f32> = match &mask {
            Some(m) => relu.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => relu.clone(),
        };
        let logits = affine(store.get(self.cls_w), store.get(self.cls_b), &features, self.classes);
        Ok(HeadOutput {
            logits,
            features,
            cache: HeadCache {
                x: x.to_vec(),
                relu,
                mask,
            },
        })
    }

    /// Backpropagates a gradient on the classifier input into the dense
    /// layer and returns the gradient on the fused input. Classifier
    /// gradients are accumulated by the caller.
    pub fn backward(&self, store: &ParamStore, grads: &mut Grads, cache: &HeadCache, dfeat: &[f32]) -> Vec<f32> {
        let mut dz: Vec<f32> = dfeat.to_vec();
        if let Some(m) = &cache.mask {
            dz.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
        }
        dz.iter_mut().zip(&cache.relu).for_each(|(d, &r)| {
            if r <= 0.0 {
                *d = 0.0;
            }
        });
        accumulate_affine(grads, (self.dense_w, self.dense_b), &cache.x, &dz);
        affine_backward_input(store.get(self.dense_w), &dz, self.input)
    }

    /// Classifier input gradient for a logit gradient, plus classifier
    /// parameter gradients accumulated into `grads`.
    pub fn classifier_backward(&self, store: &ParamStore, grads: &mut Grads, features: &[f32], dlogits: &[f32]) -> Vec<f32> {
        accumulate_affine(grads, (self.cls_w, self.cls_b), features, dlogits);
        affine_backward_input(store.get(self.cls_w), dlogits, self.units)
    }
}

/// `dW += dy·xᵀ`, `db += dy`.
fn accumulate_affine(grads: &mut Grads, (w, b): (ParamId, ParamId), x: &[f32], dy: &[f32]) {
    gemm(dy.len(), 1, x.len(), dy, false, x, false, 1.0, grads.slot(w, dy.len() * x.len()));
    grads.slot(b, dy.len()).iter_mut().zip(dy).for_each(|(a, d)| *a += d);
}
