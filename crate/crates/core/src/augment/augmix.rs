use rand::Rng as _;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::pixel::{autocontrast, equalize, posterize, solarize};
use crate::dataio::Frame;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelOp {
    Autocontrast,
    Equalize,
    Posterize { bits: u8 },
    Solarize { threshold: u16 },
}

impl PixelOp {
    pub fn apply(&self, frame: &Frame) -> Frame {
        match *self {
            PixelOp::Autocontrast => autocontrast(frame),
            PixelOp::Equalize => equalize(frame),
            PixelOp::Posterize { bits } => {
                posterize(frame, bits).expect("sampled bits are in range")
            }
            PixelOp::Solarize { threshold } => solarize(frame, threshold),
        }
    }

    fn sample(rng: &mut Rng) -> Self {
        match rng.random_range(0..4) {
            0 => PixelOp::Autocontrast,
            1 => PixelOp::Equalize,
            2 => PixelOp::Posterize {
                bits: rng.random_range(4..=8),
            },
            _ => PixelOp::Solarize {
                threshold: rng.random_range(128..=255),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmixParams {
    pub width: usize,
    pub max_depth: usize,
    pub alpha: f64,
}

impl Default for AugmixParams {
    fn default() -> Self {
        Self {
            width: 3,
            max_depth: 3,
            alpha: 1.0,
        }
    }
}

impl AugmixParams {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.max_depth == 0 || !(self.alpha > 0.0) {
            return Err(Error::invalid(format!("invalid augmix params {self:?}")));
        }
        Ok(())
    }
}

/// One realisation of the AugMix randomness for a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmixDraw {
    pub chains: Vec<Vec<PixelOp>>,
    pub weights: Vec<f64>,
    pub mix: f64,
}

impl AugmixDraw {
    pub fn sample(p: &AugmixParams, rng: &mut Rng) -> Self {
        // Dirichlet(alpha, ..., alpha) via normalised Gamma(alpha, 1) draws.
        let gamma = Gamma::new(p.alpha, 1.0).expect("alpha > 0");
        let mut weights: Vec<f64> = (0..p.width).map(|_| gamma.sample(rng)).collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            weights.iter_mut().for_each(|w| *w /= total);
        } else {
            weights.fill(1.0 / p.width as f64);
        }
        let mix = Beta::new(p.alpha, p.alpha).expect("alpha > 0").sample(rng);
        let chains = (0..p.width)
            .map(|_| {
                let depth = rng.random_range(1..=p.max_depth);
                (0..depth).map(|_| PixelOp::sample(rng)).collect()
            })
            .collect();
        Self {
            chains,
            weights,
            mix,
        }
    }

    /// `mix·frame + (1−mix)·Σ wᵢ·chainᵢ(frame)`, rounded into `[0, 255]`.
    pub fn apply(&self, frame: &Frame) -> Frame {
        let mut acc: Vec<f64> = frame.data().iter().map(|&v| self.mix * v as f64).collect();
        for (chain, &w) in self.chains.iter().zip(&self.weights) {
            let out = chain.iter().fold(frame.clone(), |f, op| op.apply(&f));
            let k = (1.0 - self.mix) * w;
            for (a, &v) in acc.iter_mut().zip(out.data()) {
                *a += k * v as f64;
            }
        }
        let data = acc.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect();
        Frame::new(frame.height(), frame.width(), data).expect("same dims")
    }
}

pub fn augmix(frame: &Frame, p: &AugmixParams, rng: &mut Rng) -> Frame {
    AugmixDraw::sample(p, rng).apply(frame)
}
