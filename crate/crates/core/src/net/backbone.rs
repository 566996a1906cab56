use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ops::{avgpool2, avgpool2_backward, col2im3, gemm, im2col3};
use super::params::{Grads, Init, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Spatial size the tiny backbone pools down to.
pub const FEATURE_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    /// Small trainable conv net (default).
    TinyConv,
    /// A frozen, externally supplied extractor such as a pretrained
    /// DenseNet121 trunk. Must be injected when the model is built.
    Densenet121Interface,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackboneSpec {
    pub kind: BackboneKind,
    /// Output channels of each tiny-conv stage.
    pub channels: Vec<usize>,
    /// Append normalised x/y coordinate planes to the input.
    pub coord_channels: bool,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        Self::desk()
    }
}

impl BackboneSpec {
    pub fn desk() -> Self {
        Self {
            kind: BackboneKind::TinyConv,
            channels: vec![8, 16, 16, 32],
            coord_channels: true,
        }
    }

    pub fn paper() -> Self {
        Self {
            kind: BackboneKind::TinyConv,
            channels: vec![16, 32, 64, 128],
            coord_channels: true,
        }
    }
}

/// Pretrained per-frame feature extractor: maps a normalised `3×h×w` frame to
/// a `C×h'×w'` feature map. Treated as frozen.
pub trait FeatureExtractor: Send + Sync + fmt::Debug {
    fn output_shape(&self, h: usize, w: usize) -> (usize, usize, usize);
    fn extract(&self, chw: &[f32], h: usize, w: usize) -> Vec<f32>;
}

#[derive(Debug, Clone)]
struct ConvStage {
    w: ParamId,
    b: ParamId,
    cin: usize,
    cout: usize,
    pool: bool,
}

/// Stack of `conv3x3 → ReLU → (2×2 avg pool while larger than 8×8)` stages.
#[derive(Debug, Clone)]
pub struct TinyConv {
    stages: Vec<ConvStage>,
    coords: bool,
    input: (usize, usize),
}

#[derive(Debug, Clone)]
struct StageCache {
    cols: Vec<f32>,
    relu: Vec<f32>,
    h: usize,
    w: usize,
}

#[derive(Debug, Clone)]
pub struct TinyConvCache {
    stages: Vec<StageCache>,
}

impl TinyConv {
    pub fn new(store: &mut ParamStore, name: &str, spec: &BackboneSpec, input: (usize, usize), rng: &mut Rng) -> Result<Self> {
        if spec.channels.is_empty() {
            return Err(Error::invalid("backbone needs at least one stage"));
        }
        let mut cin = 3 + if spec.coord_channels { 2 } else { 0 };
        let (mut h, mut w) = input;
        let mut stages = Vec::new();
        for (i, &cout) in spec.channels.iter().enumerate() {
            let pool = h.min(w) / 2 >= FEATURE_SIDE;
            let wid = store.add(
                format!("{name}.conv{i}.w"),
                &[cout, cin * 9],
                Init::He { fan_in: cin * 9 },
                rng,
            );
            let bid = store.add(format!("{name}.conv{i}.b"), &[cout], Init::Zeros, rng);
            stages.push(ConvStage {
                w: wid,
                b: bid,
                cin,
                cout,
                pool,
            });
            if pool {
                h /= 2;
                w /= 2;
            }
            cin = cout;
        }
        Ok(Self {
            stages,
            coords: spec.coord_channels,
            input,
        })
    }

    pub fn output_shape(&self) -> (usize, usize, usize) {
        let (mut h, mut w) = self.input;
        for s in &self.stages {
            if s.pool {
                h /= 2;
                w /= 2;
            }
        }
        (self.stages.last().map_or(3, |s| s.cout), h, w)
    }

    fn with_coords(&self, chw: &[f32]) -> Vec<f32> {
        let (h, w) = self.input;
        let mut x = chw.to_vec();
        if self.coords {
            let denom = |n: usize| (n.max(2) - 1) as f32;
            for _ in 0..h {
                for xx in 0..w {
                    x.push(2.0 * xx as f32 / denom(w) - 1.0);
                }
            }
            for y in 0..h {
                for _ in 0..w {
                    x.push(2.0 * y as f32 / denom(h) - 1.0);
                }
            }
        }
        x
    }

    pub fn forward(&self, store: &ParamStore, chw: &[f32], keep_cache: bool) -> (Vec<f32>, Option<TinyConvCache>) {
        let (mut h, mut w) = self.input;
        let mut x = self.with_coords(chw);
        let mut caches = Vec::new();
        for s in &self.stages {
            let hw = h * w;
            let cols = im2col3(&x, s.cin, h, w);
            let mut y = vec![0.0; s.cout * hw];
            let b = store.get(s.b);
            for (co, row) in y.chunks_exact_mut(hw).enumerate() {
                row.fill(b[co]);
            }
            gemm(s.cout, s.cin * 9, hw, store.get(s.w), false, &cols, false, 1.0, &mut y);
            y.iter_mut().for_each(|v| *v = v.max(0.0));
            let out = if s.pool { avgpool2(&y, s.cout, h, w) } else { y.clone() };
            if keep_cache {
                caches.push(StageCache { cols, relu: y, h, w });
            }
            if s.pool {
                h /= 2;
                w /= 2;
            }
            x = out;
        }
        (x, keep_cache.then_some(TinyConvCache { stages: caches }))
    }

    pub fn backward(&self, store: &ParamStore, grads: &mut Grads, cache: &TinyConvCache, dout: &[f32]) {
        let mut d = dout.to_vec();
        for (i, (s, sc)) in self.stages.iter().zip(&cache.stages).enumerate().rev() {
            let (h, w) = (sc.h, sc.w);
            let hw = h * w;
            let mut dy = if s.pool { avgpool2_backward(&d, s.cout, h, w) } else { d };
            for (g, &y) in dy.iter_mut().zip(&sc.relu) {
                if y <= 0.0 {
                    *g = 0.0;
                }
            }
            gemm(s.cout, hw, s.cin * 9, &dy, false, &sc.cols, true, 1.0, grads.slot(s.w, s.cout * s.cin * 9));
            let db = grads.slot(s.b, s.cout);
            for (co, row) in dy.chunks_exact(hw).enumerate() {
                db[co] += row.iter().sum::<f32>();
            }
            if i == 0 {
                break;
            }
            let mut dcols = vec![0.0; s.cin * 9 * hw];
            gemm(s.cin * 9, s.cout, hw, store.get(s.w), true, &dy, false, 0.0, &mut dcols);
            d = col2im3(&dcols, s.cin, h, w);
        }
    }
}

#[derive(Debug, Clone)]
pub enum Backbone {
    Tiny(TinyConv),
    Frozen {
        extractor: Arc<dyn FeatureExtractor>,
        input: (usize, usize),
    },
}

impl Backbone {
    pub fn output_shape(&self) -> (usize, usize, usize) {
        match self {
            Backbone::Tiny(t) => t.output_shape(),
            Backbone::Frozen { extractor, input } => extractor.output_shape(input.0, input.1),
        }
    }

    pub fn forward(&self, store: &ParamStore, chw: &[f32], keep_cache: bool) -> (Vec<f32>, Option<TinyConvCache>) {
        match self {
            Backbone::Tiny(t) => t.forward(store, chw, keep_cache),
            Backbone::Frozen { extractor, input } => (extractor.extract(chw, input.0, input.1), None),
        }
    }

    pub fn backward(&self, store: &ParamStore, grads: &mut Grads, cache: Option<&TinyConvCache>, dout: &[f32]) {
        if let (Backbone::Tiny(t), Some(c)) = (self, cache) {
            t.backward(store, grads, c, dout);
        }
    }
}
