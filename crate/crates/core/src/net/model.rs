use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use super::attention::GlobalAttention;
use super::backbone::{Backbone, BackboneKind, BackboneSpec, FeatureExtractor, TinyConv};
use super::branches::{patch_reduce, resize, AppearanceBranch, AppearanceCache, ChannelNorm, FlowBranch, FlowCache};
use super::dropblock::DropBlockParams;
use super::head::{FusionHead, HeadCache};
use super::lstm::Lstm;
use super::params::{Grads, ParamId, ParamStore};
use crate::dataio::{BranchKind, Clip, ManeuverLabel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Which camera views feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    InsideOnly,
    OutsideOnly,
    #[default]
    Both,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::InsideOnly, Scenario::OutsideOnly, Scenario::Both];

    /// Active branches in fusion order.
    pub fn active_branches(self) -> Vec<BranchKind> {
        use BranchKind::*;
        match self {
            Scenario::InsideOnly => vec![InsideAppearance, InsideFlow],
            Scenario::OutsideOnly => vec![OutsideAppearance, OutsideFlow],
            Scenario::Both => BranchKind::ALL.to_vec(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::InsideOnly => "inside_only",
            Scenario::OutsideOnly => "outside_only",
            Scenario::Both => "both",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown scenario {s:?} (inside_only|outside_only|both)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BranchDims {
    /// `[height, width]`.
    pub appearance_input: [usize; 2],
    pub flow_input: [usize; 2],
    pub appearance_lstm_units: usize,
    pub attention_units: usize,
    pub flow_lstm_units: usize,
    pub fusion_dense_units: usize,
    pub fusion_dropout: f64,
    pub n_classes: usize,
}

impl Default for BranchDims {
    fn default() -> Self {
        Self::desk()
    }
}

impl BranchDims {
    pub fn paper() -> Self {
        Self {
            appearance_input: [128, 128],
            flow_input: [128, 384],
            appearance_lstm_units: 512,
            attention_units: 512,
            flow_lstm_units: 128,
            fusion_dense_units: 512,
            fusion_dropout: 0.45,
            n_classes: NUM_CLASSES,
        }
    }

    pub fn desk() -> Self {
        Self {
            appearance_input: [32, 32],
            flow_input: [32, 96],
            appearance_lstm_units: 64,
            attention_units: 32,
            flow_lstm_units: 32,
            fusion_dense_units: 64,
            fusion_dropout: 0.45,
            n_classes: NUM_CLASSES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.appearance_input[0],
            self.appearance_input[1],
            self.flow_input[0],
            self.flow_input[1],
            self.appearance_lstm_units,
            self.attention_units,
            self.flow_lstm_units,
            self.fusion_dense_units,
        ];
        if all.contains(&0) {
            return Err(Error::Config("model dims must be positive".into()));
        }
        if self.n_classes != NUM_CLASSES {
            return Err(Error::Config(format!("n_classes must be {NUM_CLASSES}")));
        }
        if !(0.0..1.0).contains(&self.fusion_dropout) {
            return Err(Error::Config("fusion_dropout must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Width of the fused vector for a scenario.
    pub fn fused_dim(&self, scenario: Scenario) -> usize {
        scenario
            .active_branches()
            .iter()
            .map(|b| {
                if b.is_flow() {
                    self.flow_lstm_units
                } else {
                    self.appearance_lstm_units
                }
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub scenario: Scenario,
    pub dims: BranchDims,
    pub backbone: BackboneSpec,
    pub dropblock: DropBlockParams,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.dropblock.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// DropBlock and dropout active, driven by streams derived from `seed`.
    Train { seed: u64 },
}

/// Model-ready inputs for the active branches of one clip.
#[derive(Debug, Clone)]
pub struct PreparedClip {
    pub label: ManeuverLabel,
    pub frames: usize,
    /// Appearance: standardised `3×h×w` planes per frame. Flow: one
    /// `n × 576` buffer of patch means in `[0,1]`.
    pub inputs: BTreeMap<BranchKind, Vec<Vec<f32>>>,
}

#[derive(Debug, Clone)]
enum BranchCache {
    Appearance(AppearanceCache),
    Flow(FlowCache),
}

#[derive(Debug, Clone)]
pub struct ModelCache {
    branches: Vec<BranchCache>,
    head: HeadCache,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Vec<f32>,
    /// Classifier input (the features ISDA augments).
    pub features: Vec<f32>,
    pub cache: Option<ModelCache>,
}

#[derive(Debug, Clone)]
enum Branch {
    Appearance(AppearanceBranch),
    Flow(FlowBranch),
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub norms: BTreeMap<BranchKind, ChannelNorm>,
    branches: Vec<(BranchKind, Branch)>,
    head: FusionHead,
}

impl Model {
    /// Builds a model with a trainable tiny backbone per appearance branch.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::build(config, None, seed)
    }

    /// Builds a model whose appearance branches use a frozen external
    /// feature extractor.
    pub fn with_extractor(config: ModelConfig, extractor: Arc<dyn FeatureExtractor>, seed: u64) -> Result<Self> {
        Self::build(config, Some(extractor), seed)
    }

    fn build(config: ModelConfig, extractor: Option<Arc<dyn FeatureExtractor>>, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = &config.dims;
        let input = (d.appearance_input[0], d.appearance_input[1]);
        if !d.flow_input[0].is_multiple_of(super::FLOW_GRID.0) || !d.flow_input[1].is_multiple_of(super::FLOW_GRID.1) {
            return Err(Error::Config(format!(
                "flow_input {:?} must divide into the {}x{} patch grid",
                d.flow_input,
                super::FLOW_GRID.0,
                super::FLOW_GRID.1
            )));
        }
        let mut rng = rng::stream(seed, "model-init", &[]);
        let mut store = ParamStore::default();
        let mut branches = Vec::new();
        for kind in config.scenario.active_branches() {
            let name = kind.as_str();
            let branch = if kind.is_flow() {
                Branch::Flow(FlowBranch {
                    lstm1: Lstm::new(&mut store, &format!("{name}.lstm1"), super::FLOW_FEATURES, d.flow_lstm_units, &mut rng),
                    lstm2: Lstm::new(&mut store, &format!("{name}.lstm2"), d.flow_lstm_units, d.flow_lstm_units, &mut rng),
                })
            } else {
                let backbone = match (&config.backbone.kind, &extractor) {
                    (BackboneKind::TinyConv, _) => Backbone::Tiny(TinyConv::new(
                        &mut store,
                        &format!("{name}.backbone"),
                        &config.backbone,
                        input,
                        &mut rng,
                    )?),
                    (BackboneKind::Densenet121Interface, Some(e)) => Backbone::Frozen {
                        extractor: e.clone(),
                        input,
                    },
                    (BackboneKind::Densenet121Interface, None) => {
                        return Err(Error::Config(
                            "backbone densenet121_interface needs an injected feature extractor".into(),
                        ))
                    }
                };
                let (c, h, w) = backbone.output_shape();
                if config.dropblock.block_size > h.min(w) {
                    return Err(Error::Config(format!(
                        "dropblock block {} exceeds backbone map {h}x{w}",
                        config.dropblock.block_size
                    )));
                }
                Branch::Appearance(AppearanceBranch {
                    backbone,
                    dropblock: config.dropblock,
                    lstm: Lstm::new(&mut store, &format!("{name}.lstm"), c, d.appearance_lstm_units, &mut rng),
                    attention: GlobalAttention::new(
                        &mut store,
                        &format!("{name}.attention"),
                        d.appearance_lstm_units,
                        d.attention_units,
                        &mut rng,
                    ),
                })
            };
            branches.push((kind, branch));
        }
        let head = FusionHead::new(
            &mut store,
            d.fused_dim(config.scenario),
            d.fusion_dense_units,
            d.n_classes,
            d.fusion_dropout as f32,
            &mut rng,
        );
        let norms = branches
            .iter()
            .filter(|(k, _)| !k.is_flow())
            .map(|(k, _)| (*k, ChannelNorm::default()))
            .collect();
        Ok(Self {
            config,
            store,
            norms,
            branches,
            head,
        })
    }

    pub fn scenario(&self) -> Scenario {
        self.config.scenario
    }

    pub fn fused_dim(&self) -> usize {
        self.head.input
    }

    pub fn head(&self) -> &FusionHead {
        &self.head
    }

    pub fn classifier_ids(&self) -> (ParamId, ParamId) {
        self.head.classifier_ids()
    }

    /// Classifier weights (`classes × units`) and biases in `f64`.
    pub fn classifier_f64(&self) -> (Vec<f64>, Vec<f64>) {
        let (w, b) = self.classifier_ids();
        (
            self.store.get(w).iter().map(|&v| v as f64).collect(),
            self.store.get(b).iter().map(|&v| v as f64).collect(),
        )
    }

    /// Estimates per-channel statistics of each appearance branch from
    /// training clips, after resizing to the model input.
    pub fn fit_norms(&mut self, clips: &[Clip]) -> Result<()> {
        let [h, w] = self.config.dims.appearance_input;
        let kinds: Vec<BranchKind> = self.norms.keys().copied().collect();
        for kind in kinds {
            let mut frames = Vec::new();
            for clip in clips {
                let src = clip.branch(kind).ok_or_else(|| missing(clip, kind))?;
                frames.extend(src.iter().map(|f| resize(f, h, w)));
            }
            self.norms.insert(kind, ChannelNorm::estimate(frames.iter()));
        }
        Ok(())
    }

    pub fn prepare(&self, clip: &Clip) -> Result<PreparedClip> {
        let d = &self.config.dims;
        let mut inputs = BTreeMap::new();
        let mut frames = None;
        for (kind, _) in &self.branches {
            let src = clip.branch(*kind).ok_or_else(|| missing(clip, *kind))?;
            if src.is_empty() {
                return Err(Error::Shape(format!("clip {}: branch {kind} has no frames", clip.id)));
            }
            if *frames.get_or_insert(src.len()) != src.len() {
                return Err(Error::Shape(format!("clip {}: branches disagree on frame count", clip.id)));
            }
            let data = if kind.is_flow() {
                let [h, w] = d.flow_input;
                let mut buf = Vec::with_capacity(src.len() * super::FLOW_FEATURES);
                for f in src {
                    let v = patch_reduce(&resize(f, h, w))?;
                    buf.extend(v.into_iter().map(|x| x / 255.0));
                }
                vec![buf]
            } else {
                let [h, w] = d.appearance_input;
                let norm = self.norms[kind];
                src.iter().map(|f| norm.apply(&resize(f, h, w))).collect()
            };
            inputs.insert(*kind, data);
        }
        Ok(PreparedClip {
            label: clip.label,
            frames: frames.unwrap_or(0),
            inputs,
        })
    }

    pub fn forward(&self, x: &PreparedClip, mode: Mode, keep_cache: bool) -> Result<ForwardOutput> {
        let mut seeds = match mode {
            Mode::Eval => None,
            Mode::Train { seed } => Some(rng::stream(seed, "forward", &[])),
        };
        let mut fused = Vec::with_capacity(self.head.input);
        let mut caches = Vec::new();
        for (kind, branch) in &self.branches {
            let input = x.inputs.get(kind).ok_or_else(|| Error::MissingBranch {
                clip: "<prepared>".into(),
                branch: kind.to_string(),
            })?;
            let mut brng = seeds.as_mut().map(|r| Rng::seed_from_u64(r.random()));
            match branch {
                Branch::Appearance(b) => {
                    let (ctx, cache) = b.forward(&self.store, input, brng.as_mut(), keep_cache)?;
                    fused.extend_from_slice(&ctx);
                    if let Some(c) = cache {
                        caches.push(BranchCache::Appearance(c));
                    }
                }
                Branch::Flow(b) => {
                    let buf = &input[0];
                    if x.frames == 0 || buf.len() != x.frames * super::FLOW_FEATURES {
                        return Err(Error::Shape(format!("flow input for {kind} has wrong length")));
                    }
                    let (h, cache) = b.forward(&self.store, buf, x.frames);
                    fused.extend_from_slice(&h);
                    if keep_cache {
                        caches.push(BranchCache::Flow(cache));
                    }
                }
            }
        }
        let mut hrng = seeds.as_mut().map(|r| Rng::seed_from_u64(r.random()));
        let out = self.head.forward(&self.store, &fused, hrng.as_mut())?;
        Ok(ForwardOutput {
            logits: out.logits,
            features: out.features,
            cache: keep_cache.then_some(ModelCache {
                branches: caches,
                head: out.cache,
            }),
        })
    }

    /// Gradients of every parameter except the classifier, given the
    /// gradient on the classifier input.
    pub fn backward(&self, cache: &ModelCache, dfeatures: &[f32]) -> Grads {
        let mut grads = Grads::new(&self.store);
        let dfused = self.head.backward(&self.store, &mut grads, &cache.head, dfeatures);
        let mut offset = 0;
        for ((_, branch), bc) in self.branches.iter().zip(&cache.branches) {
            let g = match (branch, bc) {
                (Branch::Appearance(b), BranchCache::Appearance(c)) => {
                    let d = &dfused[offset..offset + b.output_dim()];
                    offset += b.output_dim();
                    b.backward(&self.store, c, d)
                }
                (Branch::Flow(b), BranchCache::Flow(c)) => {
                    let d = &dfused[offset..offset + b.output_dim()];
                    offset += b.output_dim();
                    b.backward(&self.store, c, d)
                }
                _ => unreachable!("cache layout follows branch layout"),
            };
            grads.accumulate(&g);
        }
        grads
    }

    /// Eval-mode class probabilities.
    pub fn predict_proba(&self, x: &PreparedClip) -> Result<Vec<f64>> {
        let out = self.forward(x, Mode::Eval, false)?;
        let z: Vec<f64> = out.logits.iter().map(|&v| v as f64).collect();
        super::softmax(&z)
    }
}

fn missing(clip: &Clip, kind: BranchKind) -> Error {
    Error::MissingBranch {
        clip: clip.id.clone(),
        branch: kind.to_string(),
    }
}

/// Index of the largest value; the first on ties.
pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}
