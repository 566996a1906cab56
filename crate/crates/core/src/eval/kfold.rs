use serde::{Deserialize, Serialize};

use super::horizon::{horizon_eval, predict_all, MetricsRow, OtcSettings};
use super::metrics::mean_std;
use crate::augment::Preset;
use crate::dataio::{stratified_kfold, truncate_to_horizon, Clip, DatasetManifest, HorizonSpec};
use crate::error::{Error, Result};
use crate::net::Model;
use crate::rng;
use crate::train::{train_clips, TrainConfig};

pub const METHOD_PLAIN: &str = "Our";
pub const METHOD_OTC: &str = "Our + OTC";

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Accuracy across folds for one horizon and method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldRow {
    #[serde(rename = "T")]
    pub horizon: i32,
    pub method: String,
    /// Per-fold accuracy in percent.
    pub folds: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation.
    pub std: f64,
}

impl KFoldRow {
    /// `folds` are unrounded percentages; mean and std are taken before
    /// rounding everything to two decimals.
    pub fn from_folds(horizon: i32, method: &str, folds: &[f64]) -> Self {
        let (mean, std) = mean_std(folds);
        Self {
            horizon,
            method: method.to_string(),
            folds: folds.iter().map(|&v| round2(v)).collect(),
            mean: round2(mean),
            std: round2(std),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KFoldReport {
    pub k: usize,
    pub rows: Vec<KFoldRow>,
}

/// Trains `k` models on a stratified partition and evaluates each on its
/// held-out fold. With OTC settings every horizon gets a plain row and an
/// OTC row.
pub fn kfold_run(
    manifest: &DatasetManifest,
    clips: &[Clip],
    k: usize,
    split_seed: u64,
    cfg: &TrainConfig,
    horizons: &[HorizonSpec],
    otc: Option<OtcSettings>,
) -> Result<KFoldReport> {
    if clips.len() != manifest.len() {
        return Err(Error::invalid("clips must follow the manifest"));
    }
    let plan = stratified_kfold(manifest, k, split_seed)?;
    let mut plain = vec![Vec::with_capacity(k); horizons.len()];
    let mut voted = vec![Vec::with_capacity(k); horizons.len()];
    for fold in 0..k {
        let (train, test): (Vec<&Clip>, Vec<&Clip>) = clips.iter().partition(|c| plan.assignment.get(&c.id) != Some(&fold));
        let train: Vec<Clip> = train.into_iter().cloned().collect();
        let test: Vec<Clip> = test.into_iter().cloned().collect();
        let mut fold_cfg = cfg.clone();
        fold_cfg.params.seed = rng::derive_seed(cfg.params.seed, "fold", &[fold as u64]);
        let model = train_clips(&train, &fold_cfg, None)?.model;
        for (i, &h) in horizons.iter().enumerate() {
            plain[i].push(accuracy_pct(&model, &test, h, None)?);
            if let Some(o) = otc {
                voted[i].push(accuracy_pct(&model, &test, h, Some(o))?);
            }
        }
    }
    let mut rows = Vec::new();
    for (i, h) in horizons.iter().enumerate() {
        rows.push(KFoldRow::from_folds(h.seconds(), METHOD_PLAIN, &plain[i]));
        if otc.is_some() {
            rows.push(KFoldRow::from_folds(h.seconds(), METHOD_OTC, &voted[i]));
        }
    }
    Ok(KFoldReport { k, rows })
}

/// Unrounded accuracy percentage for one horizon.
fn accuracy_pct(model: &Model, test: &[Clip], h: HorizonSpec, otc: Option<OtcSettings>) -> Result<f64> {
    let cut: Vec<Clip> = test.iter().map(|c| truncate_to_horizon(c, h)).collect();
    let preds = predict_all(model, &cut, otc, h.seconds())?;
    let hits = preds.iter().zip(test).filter(|(p, c)| **p == c.label).count();
    Ok(100.0 * hits as f64 / test.len() as f64)
}

/// Metrics across horizons for one augmentation preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSeries {
    pub preset: Preset,
    pub rows: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub series: Vec<AblationSeries>,
}

/// Trains one model per preset from the same seed. Each preset sets the
/// augmentation ops and its label smoothing.
pub fn ablation_run(
    train: &[Clip],
    test: &[Clip],
    presets: &[Preset],
    cfg: &TrainConfig,
    horizons: &[HorizonSpec],
) -> Result<AblationReport> {
    if presets.is_empty() {
        return Err(Error::invalid("no presets given"));
    }
    let mut series = Vec::new();
    for &p in presets {
        let mut c = cfg.clone();
        c.augment.enabled = p.ops();
        c.params.label_smoothing = p.label_smoothing();
        let model = train_clips(train, &c, None)?.model;
        series.push(AblationSeries {
            preset: p,
            rows: horizon_eval(&model, test, horizons, None)?,
        });
    }
    Ok(AblationReport { series })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_row_matches_table_arithmetic() {
        let folds = [87.91, 87.91, 89.01, 87.91, 89.01];
        let row = KFoldRow::from_folds(0, METHOD_PLAIN, &folds);
        assert_eq!(row.folds.len(), 5);
        assert_eq!(row.mean, 88.35);
        assert_eq!(row.std, 0.6);
        assert!(row.mean >= 87.91 && row.mean <= 89.01);
        let flat = KFoldRow::from_folds(-1, METHOD_OTC, &[80.0; 5]);
        assert_eq!(flat.std, 0.0);
    }
}
