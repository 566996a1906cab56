use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DropBlockParams {
    pub block_size: usize,
    pub keep_prob: f64,
}

impl Default for DropBlockParams {
    fn default() -> Self {
        Self {
            block_size: 5,
            keep_prob: 0.9,
        }
    }
}

impl DropBlockParams {
    pub fn validate(&self) -> Result<()> {
        if self.block_size.is_multiple_of(2) || !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::invalid(format!("invalid dropblock params {self:?}")));
        }
        Ok(())
    }

    /// Seed rate `γ = (1−keep)/bs² · (h·w)/((h−bs+1)(w−bs+1))`.
    pub fn gamma(&self, h: usize, w: usize) -> f64 {
        let bs = self.block_size;
        let valid = ((h + 1 - bs) * (w + 1 - bs)) as f64;
        (1.0 - self.keep_prob) / (bs * bs) as f64 * (h * w) as f64 / valid
    }
}

/// Multiplicative DropBlock mask for a `c×h×w` map: zeros on dropped
/// blocks, `count_total / count_kept` elsewhere. Each channel draws its own
/// seeds over the positions where a block fits entirely.
pub fn dropblock_mask(c: usize, h: usize, w: usize, p: &DropBlockParams, rng: &mut Rng) -> Result<Vec<f32>> {
    let bs = p.block_size;
    if bs > h.min(w) {
        return Err(Error::invalid(format!(
            "dropblock block {bs} larger than {h}x{w} map"
        )));
    }
    let mut mask = vec![1.0f32; c * h * w];
    let gamma = p.gamma(h, w);
    if gamma <= 0.0 {
        return Ok(mask);
    }
    for ch in 0..c {
        let plane = &mut mask[ch * h * w..(ch + 1) * h * w];
        for y0 in 0..=h - bs {
            for x0 in 0..=w - bs {
                if rng.random_bool(gamma.min(1.0)) {
                    for y in y0..y0 + bs {
                        plane[y * w + x0..y * w + x0 + bs].fill(0.0);
                    }
                }
            }
        }
    }
    let kept = mask.iter().filter(|&&m| m > 0.0).count();
    if kept > 0 {
        let scale = mask.len() as f32 / kept as f32;
        mask.iter_mut().for_each(|m| *m *= scale);
    }
    Ok(mask)
}

/// Training: applies a fresh mask and returns it. Evaluation (`rng` absent):
/// identity.
pub fn dropblock(
    map: &[f32],
    c: usize,
    h: usize,
    w: usize,
    p: &DropBlockParams,
    rng: Option<&mut Rng>,
) -> Result<(Vec<f32>, Option<Vec<f32>>)> {
    if p.block_size > h.min(w) {
        return Err(Error::invalid(format!(
            "dropblock block {} larger than {h}x{w} map",
            p.block_size
        )));
    }
    match rng {
        None => Ok((map.to_vec(), None)),
        Some(rng) => {
            let mask = dropblock_mask(c, h, w, p, rng)?;
            let out = map.iter().zip(&mask).map(|(a, m)| a * m).collect();
            Ok((out, Some(mask)))
        }
    }
}
