//! Mini-batch training with Adam, cross-entropy or ISDA loss, optional label
//! smoothing, and per-clip augmentation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{build_pipeline, AugPipelineConfig};
use crate::dataio::{Clip, DatasetManifest, ManeuverLabel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::net::{
    argmax, isda_lambda, isda_loss_soft, save_checkpoint, ClassifierView, Grads, IsdaState, Mode, Model,
    ModelConfig, ParamId, ParamStore,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    #[default]
    Isda,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Isda => "isda",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross_entropy" => Ok(LossKind::CrossEntropy),
            "isda" => Ok(LossKind::Isda),
            _ => Err(Error::invalid(format!("unknown loss {s:?} (cross_entropy|isda)"))),
        }
    }
}

/// Scalar training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub loss: LossKind,
    pub isda_lambda0: f64,
    pub label_smoothing: f64,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainParams {
    pub fn paper() -> Self {
        Self {
            epochs: 320,
            batch_size: 5,
            learning_rate: 0.0003,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            loss: LossKind::Isda,
            isda_lambda0: 0.5,
            label_smoothing: 0.0,
            seed: 0,
        }
    }

    pub fn desk() -> Self {
        Self {
            epochs: 30,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("train.epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("train.learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config("train.label_smoothing must be in [0, 1)".into()));
        }
        if !(self.isda_lambda0 >= 0.0) {
            return Err(Error::Config("train.isda_lambda0 must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainConfig {
    pub params: TrainParams,
    pub model: ModelConfig,
    pub augment: AugPipelineConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.model.validate()?;
        self.augment.validate()
    }
}

/// `1 − s + s/5` on the label, `s/5` elsewhere.
pub fn smoothed_targets(label: ManeuverLabel, s: f64) -> Result<[f64; NUM_CLASSES]> {
    if !(0.0..1.0).contains(&s) {
        return Err(Error::invalid(format!("label smoothing {s} not in [0,1)")));
    }
    let mut t = [s / NUM_CLASSES as f64; NUM_CLASSES];
    t[label.index()] += 1.0 - s;
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f32>> = store.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl From<&TrainParams> for AdamHyper {
    fn from(p: &TrainParams) -> Self {
        Self {
            lr: p.learning_rate,
            beta1: p.adam_beta1,
            beta2: p.adam_beta2,
            epsilon: p.adam_epsilon,
        }
    }
}

/// One bias-corrected Adam update. Parameters without a gradient slot are
/// treated as having zero gradient.
pub fn adam_step(store: &mut ParamStore, grads: &Grads, state: &mut AdamState, h: AdamHyper) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::Shape("adam state does not match parameters".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - h.beta1.powi(t);
    let c2 = 1.0 - h.beta2.powi(t);
    let (b1, b2) = (h.beta1 as f32, h.beta2 as f32);
    for (i, tensor) in store.tensors_mut().iter_mut().enumerate() {
        let g = grads.get(ParamId(i));
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        if let Some(g) = g {
            if g.len() != tensor.data.len() {
                return Err(Error::Shape(format!("gradient for {} has wrong length", tensor.name)));
            }
        }
        for j in 0..tensor.data.len() {
            let gj = g.map_or(0.0, |g| g[j]);
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let mhat = m[j] as f64 / c1;
            let vhat = v[j] as f64 / c2;
            tensor.data[j] -= (h.lr * mhat / (vhat.sqrt() + h.epsilon)) as f32;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "loss", "train_accuracy", "val_accuracy", "wall_seconds"])?;
        for r in &self.records {
            w.write_record([
                r.epoch.to_string(),
                format!("{:.6}", r.loss),
                format!("{:.4}", r.train_accuracy),
                r.val_accuracy.map_or(String::new(), |v| format!("{v:.4}")),
                format!("{:.3}", r.wall_seconds),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub best: Model,
    pub best_epoch: usize,
    pub history: TrainHistory,
    pub steps: u64,
}

struct BatchObjective<'a> {
    params: &'a TrainParams,
    isda: &'a mut IsdaState,
    lambda: f64,
}

/// Forward, ISDA statistics update, loss, backward. Returns
/// `(loss, grads, correct predictions)`.
fn batch_step(
    model: &Model,
    batch: &[(Clip, u64)],
    obj: BatchObjective<'_>,
) -> Result<(f64, Grads, usize)> {
    let outs: Vec<_> = batch
        .par_iter()
        .map(|(clip, seed)| {
            let x = model.prepare(clip)?;
            model.forward(&x, Mode::Train { seed: *seed }, true)
        })
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = batch.iter().map(|(c, _)| c.label.index()).collect();
    let feats: Vec<Vec<f64>> = outs
        .iter()
        .map(|o| o.features.iter().map(|&v| v as f64).collect())
        .collect();
    let targets: Vec<Vec<f64>> = batch
        .iter()
        .map(|(c, _)| smoothed_targets(c.label, obj.params.label_smoothing).map(|t| t.to_vec()))
        .collect::<Result<_>>()?;
    let lambda = match obj.params.loss {
        LossKind::CrossEntropy => 0.0,
        LossKind::Isda => {
            obj.isda.update(&feats, &labels);
            obj.lambda
        }
    };
    let (w, b) = model.classifier_f64();
    let clf = ClassifierView {
        w: &w,
        b: &b,
        dim: model.head().units,
    };
    let res = isda_loss_soft(&feats, &labels, &targets, clf, obj.isda, lambda)?;
    let correct = outs
        .iter()
        .zip(&labels)
        .filter(|(o, &y)| argmax(&o.logits.iter().map(|&v| v as f64).collect::<Vec<_>>()) == y)
        .count();
    if !res.loss.is_finite() {
        return Ok((res.loss, Grads::new(&model.store), correct));
    }
    let per_clip: Vec<Grads> = outs
        .par_iter()
        .zip(&res.d_features)
        .map(|(o, df)| {
            let df: Vec<f32> = df.iter().map(|&v| v as f32).collect();
            model.backward(o.cache.as_ref().expect("cache kept"), &df)
        })
        .collect();
    let mut grads = Grads::new(&model.store);
    for g in &per_clip {
        grads.accumulate(g);
    }
    let (wid, bid) = model.classifier_ids();
    let dw = grads.slot(wid, res.d_w.len());
    dw.iter_mut().zip(&res.d_w).for_each(|(a, d)| *a += *d as f32);
    let db = grads.slot(bid, res.d_b.len());
    db.iter_mut().zip(&res.d_b).for_each(|(a, d)| *a += *d as f32);
    Ok((res.loss, grads, correct))
}

/// Trains on in-memory clips. Deterministic for a given config and clip
/// list: batch order, augmentation and dropout draw from seeded streams and
/// gradients are summed in a fixed order.
pub fn train_clips(clips: &[Clip], cfg: &TrainConfig, validation: Option<&[Clip]>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if clips.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let p = &cfg.params;
    let augmentor = build_pipeline(&cfg.augment)?;
    let mut model = Model::new(cfg.model.clone(), rng::derive_seed(p.seed, "init", &[]))?;
    model.fit_norms(clips)?;
    let mut adam = AdamState::new(&model.store);
    let hyper = AdamHyper::from(p);
    let mut isda = IsdaState::new(model.head().units);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut bad_batches = 0;
    let mut steps = 0u64;

    for epoch in 1..=p.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..clips.len()).collect();
        order.shuffle(&mut rng::stream(p.seed, "epoch-order", &[epoch as u64]));
        let lambda = isda_lambda(p.isda_lambda0, epoch - 1, p.epochs);
        let (mut loss_sum, mut loss_n, mut correct) = (0.0, 0usize, 0usize);

        for (bi, idx) in order.chunks(p.batch_size).enumerate() {
            let batch: Vec<(Clip, u64)> = idx
                .iter()
                .map(|&i| {
                    let clip = &clips[i];
                    let mut arng = rng::keyed(p.seed, "augment", &clip.id, &[epoch as u64]);
                    let aug = augmentor.apply(clip, &mut arng)?;
                    let seed = rng::derive_seed(p.seed, "dropout", &[epoch as u64, bi as u64, i as u64]);
                    Ok((aug, seed))
                })
                .collect::<Result<_>>()?;
            let obj = BatchObjective {
                params: p,
                isda: &mut isda,
                lambda,
            };
            let (loss, grads, ok) = batch_step(&model, &batch, obj)?;
            correct += ok;
            if !loss.is_finite() {
                bad_batches += 1;
                if bad_batches >= 3 {
                    return Err(Error::Diverged(format!(
                        "non-finite loss for 3 consecutive batches (epoch {epoch}, batch {bi})"
                    )));
                }
                continue;
            }
            bad_batches = 0;
            loss_sum += loss * batch.len() as f64;
            loss_n += batch.len();
            adam_step(&mut model.store, &grads, &mut adam, hyper)?;
            steps += 1;
        }

        let loss = if loss_n > 0 { loss_sum / loss_n as f64 } else { f64::NAN };
        let val_accuracy = match validation {
            Some(v) if !v.is_empty() => Some(accuracy(&model, v)?),
            _ => None,
        };
        history.records.push(EpochRecord {
            epoch,
            loss,
            train_accuracy: correct as f64 / clips.len() as f64,
            val_accuracy,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        if loss.is_finite() && best.as_ref().is_none_or(|(l, _, _)| loss < *l) {
            best = Some((loss, epoch, model.clone()));
        }
    }
    let (_, best_epoch, best_model) = best.unwrap_or_else(|| (f64::NAN, p.epochs, model.clone()));
    Ok(TrainOutcome {
        model,
        best: best_model,
        best_epoch,
        history,
        steps,
    })
}

/// Eval-mode accuracy on full clips.
pub fn accuracy(model: &Model, clips: &[Clip]) -> Result<f64> {
    let hits: Vec<bool> = clips
        .par_iter()
        .map(|c| Ok(argmax(&model.predict_proba(&model.prepare(c)?)?) == c.label.index()))
        .collect::<Result<_>>()?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / clips.len().max(1) as f64)
}

/// Loads the manifest's clips for the configured scenario and trains.
pub fn train(manifest: &DatasetManifest, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if manifest.is_empty() {
        return Err(Error::Manifest("training manifest is empty".into()));
    }
    let branches = cfg.model.scenario.active_branches();
    manifest.require(&branches)?;
    let clips = manifest.load_all(&branches)?;
    train_clips(&clips, cfg, None)
}

pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const HISTORY_FILE: &str = "history.csv";

/// Writes `final.ckpt`, `best.ckpt` and `history.csv` into `dir`.
pub fn save_outcome(outcome: &TrainOutcome, cfg: &TrainConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let echo = serde_json::to_value(&cfg.params)?;
    save_checkpoint(&outcome.model, outcome.steps, echo.clone(), &dir.join(FINAL_CHECKPOINT))?;
    let mut best_echo = echo;
    best_echo["best_epoch"] = outcome.best_epoch.into();
    save_checkpoint(&outcome.best, outcome.steps, best_echo, &dir.join(BEST_CHECKPOINT))?;
    outcome.history.write_csv(&dir.join(HISTORY_FILE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::Preset;
    use crate::dataio::synth::render_clip;
    use crate::net::{cross_entropy, Init, Scenario};

    #[test]
    fn smoothing_examples() {
        assert_eq!(smoothed_targets(ManeuverLabel::GoStraight, 0.0).unwrap(), [1.0, 0.0, 0.0, 0.0, 0.0]);
        let t = smoothed_targets(ManeuverLabel::GoStraight, 0.1).unwrap();
        let expected = [0.92, 0.02, 0.02, 0.02, 0.02];
        for (a, b) in t.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        for s in [0.0, 0.05, 0.3, 0.99] {
            let t = smoothed_targets(ManeuverLabel::RightTurn, s).unwrap();
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(smoothed_targets(ManeuverLabel::RightTurn, 1.0).is_err());
    }

    fn scalar_store(v: f32) -> ParamStore {
        let mut store = ParamStore::default();
        let mut r = rng::stream(0, "t", &[]);
        let id = store.add("x", &[1], Init::Zeros, &mut r);
        store.get_mut(id)[0] = v;
        store
    }

    #[test]
    fn adam_zero_gradient_and_first_step() {
        let h = AdamHyper::from(&TrainParams::paper());
        let mut store = scalar_store(1.0);
        let mut st = AdamState::new(&store);
        let zero = Grads::new(&store);
        adam_step(&mut store, &zero, &mut st, h).unwrap();
        assert_eq!(store.tensors()[0].data[0], 1.0);
        assert_eq!(st.step, 1);

        let mut store = scalar_store(1.0);
        let mut st = AdamState::new(&store);
        let mut g = Grads::new(&store);
        let id = store.find("x").unwrap();
        g.slot(id, 1)[0] = 1.0;
        adam_step(&mut store, &g, &mut st, h).unwrap();
        // m̂ = 1, v̂ = 1 at t = 1, so the step is lr / (1 + ε).
        let expected = 1.0 - 0.0003 / (1.0 + 1e-8);
        assert!((store.tensors()[0].data[0] as f64 - expected).abs() < 1e-7);

        let mut a = scalar_store(0.5);
        let mut b = a.clone();
        let (mut sa, mut sb) = (AdamState::new(&a), AdamState::new(&b));
        adam_step(&mut a, &g, &mut sa, h).unwrap();
        adam_step(&mut b, &g, &mut sb, h).unwrap();
        assert_eq!(a, b);
        assert_eq!(sa, sb);
    }

    #[test]
    fn cross_entropy_objective_equals_isda_with_zero_lambda() {
        let feats = vec![vec![0.3, -0.1, 0.8], vec![-0.5, 0.2, 0.0]];
        let labels = [2usize, 4];
        let w: Vec<f64> = (0..15).map(|i| ((i * 5 % 7) as f64 - 3.0) * 0.2).collect();
        let b = vec![0.1, 0.0, -0.2, 0.3, 0.05];
        let clf = ClassifierView { w: &w, b: &b, dim: 3 };
        let mut state = IsdaState::new(3);
        state.update(&feats, &labels);
        let targets: Vec<Vec<f64>> = labels
            .iter()
            .map(|&y| smoothed_targets(ManeuverLabel::from_index(y).unwrap(), 0.0).unwrap().to_vec())
            .collect();
        let isda = isda_loss_soft(&feats, &labels, &targets, clf, &state, 0.0).unwrap();
        let ce: f64 = feats
            .iter()
            .zip(&labels)
            .map(|(f, &y)| cross_entropy(&clf.logits(f), y))
            .sum::<f64>()
            / 2.0;
        assert!((isda.loss - ce).abs() < 1e-6);
    }

    fn tiny_cfg(epochs: usize) -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.params.epochs = epochs;
        cfg.model.scenario = Scenario::InsideOnly;
        cfg.model.dims.appearance_input = [16, 16];
        cfg.model.dims.flow_input = [8, 24];
        cfg.model.backbone.channels = vec![4, 8];
        cfg.augment = AugPipelineConfig::preset(Preset::A);
        cfg
    }

    fn tiny_clips(n: usize) -> Vec<Clip> {
        (0..n)
            .map(|i| render_clip(ManeuverLabel::ALL[i % 5], 3, i, 16).into_clip(&format!("c{i}")))
            .collect()
    }

    #[test]
    fn loss_decreases_on_a_fixed_batch() {
        let cfg = TrainConfig::default();
        let clips: Vec<Clip> = (0..5)
            .map(|i| render_clip(ManeuverLabel::ALL[i], 3, i, 32).into_clip(&format!("c{i}")))
            .collect();
        let mut model = Model::new(cfg.model.clone(), 1).unwrap();
        model.fit_norms(&clips).unwrap();
        let mut adam = AdamState::new(&model.store);
        let mut isda = IsdaState::new(model.head().units);
        let batch: Vec<(Clip, u64)> = clips.iter().cloned().map(|c| (c, 77)).collect();
        let mut params = cfg.params.clone();
        params.loss = LossKind::CrossEntropy;
        let mut losses = Vec::new();
        for _ in 0..=10 {
            let obj = BatchObjective {
                params: &params,
                isda: &mut isda,
                lambda: 0.0,
            };
            let (loss, grads, _) = batch_step(&model, &batch, obj).unwrap();
            losses.push(loss);
            adam_step(&mut model.store, &grads, &mut adam, AdamHyper::from(&params)).unwrap();
        }
        assert!(losses[10] <= losses[0] * 0.99, "losses {losses:?}");
    }

    #[test]
    fn training_is_deterministic_and_history_complete() {
        let cfg = tiny_cfg(2);
        let clips = tiny_clips(10);
        let a = train_clips(&clips, &cfg, Some(&clips[..5])).unwrap();
        let b = train_clips(&clips, &cfg, None).unwrap();
        assert_eq!(a.history.len(), 2);
        assert_eq!(a.model.store, b.model.store);
        assert_eq!(a.history.records[1].loss, b.history.records[1].loss);
        assert!(a.history.records.iter().all(|r| r.loss.is_finite()));
        assert!(a.history.records[0].val_accuracy.is_some());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = tiny_cfg(1);
        cfg.params.epochs = 0;
        assert!(train_clips(&tiny_clips(5), &cfg, None).is_err());
        assert!(train_clips(&[], &tiny_cfg(1), None).is_err());
    }

    #[test]
    fn full_scale_params_echo_into_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(1);
        cfg.params = TrainParams {
            epochs: 320,
            ..TrainParams::paper()
        };
        let model = Model::new(cfg.model.clone(), 0).unwrap();
        let outcome = TrainOutcome {
            best: model.clone(),
            model,
            best_epoch: 1,
            history: TrainHistory::default(),
            steps: 0,
        };
        save_outcome(&outcome, &cfg, dir.path()).unwrap();
        let (header, _) = crate::net::read_header(&dir.path().join(FINAL_CHECKPOINT)).unwrap();
        assert_eq!(header.train["epochs"], 320);
        assert_eq!(header.train["batch_size"], 5);
        assert_eq!(header.train["learning_rate"], 0.0003);
        assert!(dir.path().join(HISTORY_FILE).exists());
    }
}
