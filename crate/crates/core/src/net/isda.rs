//! Implicit semantic data augmentation: cross-entropy on logits inflated by
//! the class-conditional feature covariance along each class direction,
//!
//! `L = −log softmax(z + (λ/2)·q)_y`, `q_j = (w_j − w_y)ᵀ Σ_y (w_j − w_y)`,
//!
//! with a diagonal running estimate of `Σ_y`.

use serde::{Deserialize, Serialize};

use crate::dataio::NUM_CLASSES;
use crate::error::{Error, Result};

/// Numerically stable softmax. Rejects non-finite logits.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("softmax of non-finite logits"));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ex: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = ex.iter().sum();
    Ok(ex.into_iter().map(|e| e / s).collect())
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// `−log softmax(z)_y`.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    -log_softmax(logits)[label]
}

/// Running per-class feature mean and diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsdaState {
    pub dim: usize,
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
    pub count: Vec<u64>,
}

impl IsdaState {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            mean: vec![vec![0.0; dim]; NUM_CLASSES],
            var: vec![vec![0.0; dim]; NUM_CLASSES],
            count: vec![0; NUM_CLASSES],
        }
    }

    /// Merges a batch into the running estimates using count-weighted
    /// pooling of means and variances (exact for the union of samples).
    pub fn update(&mut self, features: &[Vec<f64>], labels: &[usize]) {
        for class in 0..NUM_CLASSES {
            let rows: Vec<&Vec<f64>> = features
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == class)
                .map(|(f, _)| f)
                .collect();
            if rows.is_empty() {
                continue;
            }
            let nb = rows.len() as f64;
            let na = self.count[class] as f64;
            let n = na + nb;
            for d in 0..self.dim {
                let mb = rows.iter().map(|r| r[d]).sum::<f64>() / nb;
                let vb = rows.iter().map(|r| (r[d] - mb).powi(2)).sum::<f64>() / nb;
                let (ma, va) = (self.mean[class][d], self.var[class][d]);
                let delta = mb - ma;
                self.mean[class][d] = ma + delta * nb / n;
                self.var[class][d] = (na * va + nb * vb) / n + na * nb * delta * delta / (n * n);
            }
            self.count[class] += rows.len() as u64;
        }
    }
}

/// `λ(t) = λ₀ · t / T`.
pub fn isda_lambda(lambda0: f64, t: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    lambda0 * t as f64 / total as f64
}

/// Linear classifier `z_j = w_jᵀ f + b_j`, `w` stored `classes × dim`.
#[derive(Debug, Clone, Copy)]
pub struct ClassifierView<'a> {
    pub w: &'a [f64],
    pub b: &'a [f64],
    pub dim: usize,
}

impl ClassifierView<'_> {
    pub fn classes(&self) -> usize {
        self.b.len()
    }

    pub fn logits(&self, f: &[f64]) -> Vec<f64> {
        (0..self.classes())
            .map(|j| {
                self.w[j * self.dim..(j + 1) * self.dim]
                    .iter()
                    .zip(f)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    + self.b[j]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsdaOutput {
    /// Mean loss over the batch.
    pub loss: f64,
    pub d_features: Vec<Vec<f64>>,
    pub d_w: Vec<f64>,
    pub d_b: Vec<f64>,
}

/// ISDA loss with hard labels.
pub fn isda_loss(
    features: &[Vec<f64>],
    labels: &[usize],
    clf: ClassifierView<'_>,
    state: &IsdaState,
    lambda: f64,
) -> Result<IsdaOutput> {
    let targets: Vec<Vec<f64>> = labels
        .iter()
        .map(|&y| {
            let mut t = vec![0.0; clf.classes()];
            t[y] = 1.0;
            t
        })
        .collect();
    isda_loss_soft(features, labels, &targets, clf, state, lambda)
}

/// ISDA loss against soft targets (label smoothing); `labels` selects the
/// covariance and the reference class direction. With one-hot targets this
/// is exactly [`isda_loss`].
pub fn isda_loss_soft(
    features: &[Vec<f64>],
    labels: &[usize],
    targets: &[Vec<f64>],
    clf: ClassifierView<'_>,
    state: &IsdaState,
    lambda: f64,
) -> Result<IsdaOutput> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("isda lambda must be >= 0, got {lambda}")));
    }
    if features.len() != labels.len() || labels.len() != targets.len() || features.is_empty() {
        return Err(Error::Shape("isda batch sizes disagree or are empty".into()));
    }
    let (k, d) = (clf.classes(), clf.dim);
    let inv_n = 1.0 / features.len() as f64;
    let mut loss = 0.0;
    let mut d_features = Vec::with_capacity(features.len());
    let mut d_w = vec![0.0; k * d];
    let mut d_b = vec![0.0; k];

    for ((f, &y), t) in features.iter().zip(labels).zip(targets) {
        if f.len() != d || y >= k || t.len() != k {
            return Err(Error::Shape("isda feature/label dims".into()));
        }
        let sigma = &state.var[y];
        let wy = &clf.w[y * d..(y + 1) * d];
        let mut z = clf.logits(f);
        for j in 0..k {
            if j == y {
                continue;
            }
            let wj = &clf.w[j * d..(j + 1) * d];
            let q: f64 = (0..d).map(|i| sigma[i] * (wj[i] - wy[i]).powi(2)).sum();
            z[j] += 0.5 * lambda * q;
        }
        let logp = log_softmax(&z);
        loss += -t.iter().zip(&logp).map(|(a, b)| a * b).sum::<f64>() * inv_n;

        // dL/dz̃_j = p_j − t_j (targets sum to 1).
        let g: Vec<f64> = logp.iter().zip(t).map(|(lp, ti)| (lp.exp() - ti) * inv_n).collect();
        let mut df = vec![0.0; d];
        for j in 0..k {
            let wj = &clf.w[j * d..(j + 1) * d];
            d_b[j] += g[j];
            for i in 0..d {
                df[i] += g[j] * wj[i];
                d_w[j * d + i] += g[j] * f[i];
            }
            if j != y && lambda > 0.0 {
                for i in 0..d {
                    let step = g[j] * lambda * sigma[i] * (wj[i] - wy[i]);
                    d_w[j * d + i] += step;
                    d_w[y * d + i] -= step;
                }
            }
        }
        d_features.push(df);
    }
    Ok(IsdaOutput {
        loss,
        d_features,
        d_w,
        d_b,
    })
}
