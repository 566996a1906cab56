use serde::{Deserialize, Serialize};

use crate::dataio::{ManeuverLabel, NUM_CLASSES};
use crate::error::{Error, Result};

/// Rows are true labels, columns predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn add(&mut self, truth: ManeuverLabel, pred: ManeuverLabel) {
        self.counts[truth.index()][pred.index()] += 1;
    }
}

pub fn confusion(preds: &[ManeuverLabel], truths: &[ManeuverLabel]) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in preds.iter().zip(truths) {
        cm.add(t, p);
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Some ratio had a zero denominator and was set to 0.
    pub zero_division: bool,
}

/// Metrics as fractions in `[0,1]`; precision, recall and F1 are macro
/// averages over the five classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

impl Metrics {
    pub fn zero_division_classes(&self) -> Vec<ManeuverLabel> {
        self.per_class
            .iter()
            .enumerate()
            .filter(|(_, m)| m.zero_division)
            .map(|(i, _)| ManeuverLabel::ALL[i])
            .collect()
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn class_metrics(cm: &ConfusionMatrix, c: usize) -> ClassMetrics {
    let total = cm.total();
    let tp = cm.counts[c][c];
    let fp: u64 = (0..NUM_CLASSES).filter(|&t| t != c).map(|t| cm.counts[t][c]).sum();
    let fn_: u64 = (0..NUM_CLASSES).filter(|&p| p != c).map(|p| cm.counts[c][p]).sum();
    let (precision, zp) = ratio(tp, tp + fp);
    let (recall, zr) = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassMetrics {
        tp,
        fp,
        fn_,
        tn: total - tp - fp - fn_,
        precision,
        recall,
        f1,
        zero_division: zp || zr,
    }
}

pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("empty confusion matrix"));
    }
    let per_class: Vec<ClassMetrics> = (0..NUM_CLASSES).map(|c| class_metrics(cm, c)).collect();
    let k = NUM_CLASSES as f64;
    Ok(Metrics {
        accuracy: cm.trace() as f64 / total as f64,
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
        per_class,
    })
}

/// Rounds a fraction to a percentage with two decimals.
pub fn pct(x: f64) -> f64 {
    (x * 10_000.0).round() / 100.0
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
