use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{confusion, metrics_from_confusion, pct, ConfusionMatrix};
use super::otc::otc_predict;
use crate::dataio::{truncate_to_horizon, Clip, HorizonSpec, ManeuverLabel};
use crate::error::{Error, Result};
use crate::net::{argmax, Model};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OtcSettings {
    pub cutout_fraction: f64,
    pub seed: u64,
}

/// One table row: metrics in percent, rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    #[serde(rename = "T")]
    pub horizon: i32,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: [[u64; 5]; 5],
    /// Classes whose precision or recall had a zero denominator.
    pub zero_division: Vec<ManeuverLabel>,
}

impl MetricsRow {
    pub fn from_confusion(horizon: i32, cm: &ConfusionMatrix) -> Result<Self> {
        let m = metrics_from_confusion(cm)?;
        Ok(Self {
            horizon,
            accuracy: pct(m.accuracy),
            precision: pct(m.precision),
            recall: pct(m.recall),
            f1: pct(m.f1),
            confusion: cm.counts,
            zero_division: m.zero_division_classes(),
        })
    }
}

/// Predicted labels for full clips, optionally via OTC voting. `horizon`
/// only keys the OTC random stream.
pub fn predict_all(model: &Model, clips: &[Clip], otc: Option<OtcSettings>, horizon: i32) -> Result<Vec<ManeuverLabel>> {
    clips
        .par_iter()
        .map(|clip| match otc {
            None => {
                let p = model.predict_proba(&model.prepare(clip)?)?;
                Ok(ManeuverLabel::from_index(argmax(&p)).expect("class index"))
            }
            Some(o) => {
                let mut r = rng::keyed(o.seed, "otc", &clip.id, &[horizon.unsigned_abs() as u64]);
                Ok(otc_predict(model, clip, o.cutout_fraction, &mut r)?.0)
            }
        })
        .collect()
}

/// One row per horizon, in the order given.
pub fn horizon_eval(model: &Model, clips: &[Clip], horizons: &[HorizonSpec], otc: Option<OtcSettings>) -> Result<Vec<MetricsRow>> {
    if clips.is_empty() {
        return Err(Error::invalid("no test clips"));
    }
    let truths: Vec<ManeuverLabel> = clips.iter().map(|c| c.label).collect();
    horizons
        .iter()
        .map(|&h| {
            let cut: Vec<Clip> = clips.iter().map(|c| truncate_to_horizon(c, h)).collect();
            let preds = predict_all(model, &cut, otc, h.seconds())?;
            MetricsRow::from_confusion(h.seconds(), &confusion(&preds, &truths)?)
        })
        .collect()
}
