use image::imageops::{resize as image_resize, FilterType};
use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::attention::{AttentionCache, GlobalAttention};
use super::backbone::{Backbone, TinyConvCache};
use super::dropblock::{dropblock, DropBlockParams};
use super::lstm::{Lstm, LstmCache};
use super::params::{Grads, ParamStore};
use crate::dataio::Frame;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Patch grid used to reduce a motion frame to a vector: 8 rows × 24 columns.
pub const FLOW_GRID: (usize, usize) = (8, 24);
pub const FLOW_FEATURES: usize = 3 * FLOW_GRID.0 * FLOW_GRID.1;

/// Bilinear resize; returns the input unchanged when already at size.
pub fn resize(frame: &Frame, h: usize, w: usize) -> Frame {
    if frame.dims() == (h, w) {
        return frame.clone();
    }
    let img = RgbImage::from_raw(frame.width() as u32, frame.height() as u32, frame.data().to_vec())
        .expect("frame buffer matches dims");
    let out = image_resize(&img, w as u32, h as u32, FilterType::Triangle);
    Frame::new(h, w, out.into_raw()).expect("resized dims")
}

/// Per-channel mean/std of `[0,1]`-scaled pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorm {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Default for ChannelNorm {
    fn default() -> Self {
        Self {
            mean: [0.5; 3],
            std: [0.25; 3],
        }
    }
}

impl ChannelNorm {
    pub fn estimate<'a>(frames: impl IntoIterator<Item = &'a Frame>) -> Self {
        let mut sum = [0f64; 3];
        let mut sq = [0f64; 3];
        let mut n = 0f64;
        for f in frames {
            for px in f.data().chunks_exact(3) {
                for c in 0..3 {
                    let v = px[c] as f64 / 255.0;
                    sum[c] += v;
                    sq[c] += v * v;
                }
                n += 1.0;
            }
        }
        if n == 0.0 {
            return Self::default();
        }
        let mut out = Self::default();
        for c in 0..3 {
            let m = sum[c] / n;
            out.mean[c] = m as f32;
            out.std[c] = ((sq[c] / n - m * m).max(0.0).sqrt() as f32).max(1e-3);
        }
        out
    }

    /// `3×h×w` standardised planes.
    pub fn apply(&self, frame: &Frame) -> Vec<f32> {
        let (h, w) = frame.dims();
        let mut out = vec![0.0; 3 * h * w];
        for (i, px) in frame.data().chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * h * w + i] = (px[c] as f32 / 255.0 - self.mean[c]) / self.std[c];
            }
        }
        out
    }
}

/// Mean intensity of each patch of an `8×24` grid, per channel, laid out
/// channel-major. Frame sides must be divisible by the grid.
pub fn patch_reduce(frame: &Frame) -> Result<Vec<f32>> {
    let (h, w) = frame.dims();
    let (gh, gw) = FLOW_GRID;
    if h % gh != 0 || w % gw != 0 {
        return Err(Error::Shape(format!(
            "flow frame {h}x{w} not divisible into a {gh}x{gw} grid"
        )));
    }
    let (ph, pw) = (h / gh, w / gw);
    let mut out = vec![0.0f32; FLOW_FEATURES];
    for y in 0..h {
        for x in 0..w {
            let cell = (y / ph) * gw + x / pw;
            for c in 0..3 {
                out[c * gh * gw + cell] += frame.get(y, x, c) as f32;
            }
        }
    }
    let area = (ph * pw) as f32;
    out.iter_mut().for_each(|v| *v /= area);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AppearanceBranch {
    pub backbone: Backbone,
    pub dropblock: DropBlockParams,
    pub lstm: Lstm,
    pub attention: GlobalAttention,
}

#[derive(Debug, Clone)]
pub struct AppearanceCache {
    frames: Vec<(Option<TinyConvCache>, Option<Vec<f32>>)>,
    lstm: LstmCache,
    pub attention: AttentionCache,
}

impl AppearanceBranch {
    pub fn output_dim(&self) -> usize {
        self.lstm.hidden
    }

    /// `frames`: standardised `3×h×w` planes. `rng` present = training mode.
    pub fn forward(
        &self,
        store: &ParamStore,
        frames: &[Vec<f32>],
        rng: Option<&mut Rng>,
        keep_cache: bool,
    ) -> Result<(Vec<f32>, Option<AppearanceCache>)> {
        if frames.is_empty() {
            return Err(Error::Shape("appearance branch got no frames".into()));
        }
        let (c, h, w) = self.backbone.output_shape();
        let seeds: Option<Vec<u64>> = rng.map(|r| {
            use rand::Rng as _;
            (0..frames.len()).map(|_| r.random()).collect()
        });
        let per_frame: Vec<Result<(Vec<f32>, Option<TinyConvCache>, Option<Vec<f32>>)>> = frames
            .par_iter()
            .enumerate()
            .map(|(t, chw)| {
                let (map, bc) = self.backbone.forward(store, chw, keep_cache);
                let mut frng = seeds.as_ref().map(|s| <Rng as rand::SeedableRng>::seed_from_u64(s[t]));
                let (dropped, mask) = dropblock(&map, c, h, w, &self.dropblock, frng.as_mut())?;
                let pooled: Vec<f32> = dropped
                    .chunks_exact(h * w)
                    .map(|p| p.iter().sum::<f32>() / (h * w) as f32)
                    .collect();
                Ok((pooled, bc, mask))
            })
            .collect();
        let n = frames.len();
        let mut x = Vec::with_capacity(n * c);
        let mut fcaches = Vec::with_capacity(n);
        for r in per_frame {
            let (pooled, bc, mask) = r?;
            x.extend_from_slice(&pooled);
            fcaches.push((bc, mask));
        }
        let lc = self.lstm.forward(store, &x, n);
        let (ctx, ac) = self.attention.forward(store, &lc.h, n);
        Ok((
            ctx,
            keep_cache.then_some(AppearanceCache {
                frames: fcaches,
                lstm: lc,
                attention: ac,
            }),
        ))
    }

    pub fn backward(&self, store: &ParamStore, cache: &AppearanceCache, dctx: &[f32]) -> Grads {
        let mut grads = Grads::new(store);
        let dh = self.attention.backward(store, &mut grads, &cache.attention, dctx);
        let dx = self
            .lstm
            .backward(store, &mut grads, &cache.lstm, &dh, true)
            .expect("input gradient requested");
        let (c, h, w) = self.backbone.output_shape();
        let hw = h * w;
        let frame_grads: Vec<Grads> = cache
            .frames
            .par_iter()
            .enumerate()
            .map(|(t, (bc, mask))| {
                let mut g = Grads::new(store);
                let mut dmap = vec![0.0; c * hw];
                for ch in 0..c {
                    let v = dx[t * c + ch] / hw as f32;
                    dmap[ch * hw..(ch + 1) * hw].fill(v);
                }
                if let Some(m) = mask {
                    dmap.iter_mut().zip(m).for_each(|(d, k)| *d *= k);
                }
                self.backbone.backward(store, &mut g, bc.as_ref(), &dmap);
                g
            })
            .collect();
        for g in &frame_grads {
            grads.accumulate(g);
        }
        grads
    }
}

/// Two stacked LSTMs over patch-reduced motion frames; returns the last
/// hidden state of the second layer.
#[derive(Debug, Clone)]
pub struct FlowBranch {
    pub lstm1: Lstm,
    pub lstm2: Lstm,
}

#[derive(Debug, Clone)]
pub struct FlowCache {
    l1: LstmCache,
    l2: LstmCache,
}

impl FlowBranch {
    pub fn output_dim(&self) -> usize {
        self.lstm2.hidden
    }

    /// `x`: `n × 576` patch features scaled to `[0,1]`.
    pub fn forward(&self, store: &ParamStore, x: &[f32], n: usize) -> (Vec<f32>, FlowCache) {
        let l1 = self.lstm1.forward(store, x, n);
        let l2 = self.lstm2.forward(store, &l1.h, n);
        (l2.last_hidden(self.lstm2.hidden).to_vec(), FlowCache { l1, l2 })
    }

    pub fn backward(&self, store: &ParamStore, cache: &FlowCache, dout: &[f32]) -> Grads {
        let mut grads = Grads::new(store);
        let hd = self.lstm2.hidden;
        let n = cache.l2.h.len() / hd;
        let mut dh2 = vec![0.0; n * hd];
        dh2[(n - 1) * hd..].copy_from_slice(dout);
        let dh1 = self
            .lstm2
            .backward(store, &mut grads, &cache.l2, &dh2, true)
            .expect("input gradient requested");
        self.lstm1.backward(store, &mut grads, &cache.l1, &dh1, false);
        grads
    }
}
