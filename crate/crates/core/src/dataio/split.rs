use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::label::{ManeuverLabel, NUM_CLASSES};
use super::manifest::{DatasetManifest, ManifestRecord};
use crate::error::{Error, Result};
use crate::rng;

/// Records of each class, sorted by clip id and then shuffled with a
/// per-class seeded stream.
fn shuffled_by_class(
    manifest: &DatasetManifest,
    seed: u64,
    tag: &str,
) -> [Vec<ManifestRecord>; NUM_CLASSES] {
    let mut by_class: [Vec<ManifestRecord>; NUM_CLASSES] = Default::default();
    for r in &manifest.records {
        by_class[r.label.index()].push(r.clone());
    }
    for (c, recs) in by_class.iter_mut().enumerate() {
        recs.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
        recs.shuffle(&mut rng::stream(seed, tag, &[c as u64]));
    }
    by_class
}

/// Stratified train/test split. The total test size is
/// `round(N·(1−ratio))`, spread over classes by largest remainder so that
/// every class is within one clip of its proportional share.
pub fn holdout_split(
    manifest: &DatasetManifest,
    ratio: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio {ratio} not in (0,1)")));
    }
    let counts = manifest.class_counts();
    for (c, &n) in counts.iter().enumerate() {
        if n == 1 {
            return Err(Error::ClassTooSmall {
                label: ManeuverLabel::ALL[c].to_string(),
                count: n,
            });
        }
    }
    let test_frac = 1.0 - ratio;
    let total = manifest.len();
    let target = (total as f64 * test_frac).round() as usize;

    let quotas: Vec<f64> = counts.iter().map(|&n| n as f64 * test_frac).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..NUM_CLASSES).filter(|&c| counts[c] > 0).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut assigned: usize = alloc.iter().sum();
    for &c in order.iter().cycle().take(order.len() * 2) {
        if assigned >= target {
            break;
        }
        if alloc[c] < counts[c] - 1 && (alloc[c] as f64) < quotas[c].ceil() {
            alloc[c] += 1;
            assigned += 1;
        }
    }
    for c in 0..NUM_CLASSES {
        if counts[c] > 0 {
            alloc[c] = alloc[c].min(counts[c] - 1);
        }
    }

    let by_class = shuffled_by_class(manifest, seed, "holdout");
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, recs) in by_class.into_iter().enumerate() {
        let (t, r) = recs.split_at(alloc[c]);
        test.extend_from_slice(t);
        train.extend_from_slice(r);
    }
    train.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    test.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    Ok((manifest.with_records(train), manifest.with_records(test)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    /// (train, test) manifests for fold `fold`.
    pub fn split(
        &self,
        manifest: &DatasetManifest,
        fold: usize,
    ) -> Result<(DatasetManifest, DatasetManifest)> {
        if fold >= self.k {
            return Err(Error::invalid(format!("fold {fold} >= k={}", self.k)));
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for r in &manifest.records {
            match self.assignment.get(&r.clip_id) {
                Some(&f) if f == fold => test.push(r.clone()),
                Some(_) => train.push(r.clone()),
                None => {
                    return Err(Error::Manifest(format!(
                        "clip {} missing from fold plan",
                        r.clip_id
                    )))
                }
            }
        }
        Ok((manifest.with_records(train), manifest.with_records(test)))
    }
}

/// Stratified K-fold assignment: within each class, seeded shuffle then
/// round-robin, with the starting fold rotated by the running clip count so
/// that global fold sizes also differ by at most one.
pub fn stratified_kfold(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be >= 2, got {k}")));
    }
    let counts = manifest.class_counts();
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 && n < k {
            return Err(Error::InsufficientClips {
                label: ManeuverLabel::ALL[c].to_string(),
                count: n,
                k,
            });
        }
    }
    let mut assignment = BTreeMap::new();
    let mut offset = 0;
    for recs in shuffled_by_class(manifest, seed, "kfold") {
        for (i, r) in recs.iter().enumerate() {
            assignment.insert(r.clip_id.clone(), (offset + i) % k);
        }
        offset += recs.len();
    }
    Ok(FoldPlan { k, assignment })
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use proptest::prelude::*;

    use super::*;

    pub(crate) fn manifest_with(counts: [usize; NUM_CLASSES]) -> DatasetManifest {
        let mut recs = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                recs.push(ManifestRecord {
                    clip_id: format!("c{c}_{i:04}"),
                    label: ManeuverLabel::ALL[c],
                    driver_id: format!("d{}", i % 3),
                    dirs: BTreeMap::new(),
                });
            }
        }
        DatasetManifest::new("root", recs).unwrap()
    }

    #[test]
    fn full_size_holdout() {
        let m = manifest_with([91; 5]);
        let (train, test) = holdout_split(&m, 0.8, 3).unwrap();
        assert_eq!(train.len(), 364);
        assert_eq!(test.len(), 91);
        for (c, n) in test.class_counts().iter().enumerate() {
            let share = 91.0 * 0.2;
            assert!((*n as f64 - share).abs() <= 1.0, "class {c}: {n}");
        }
    }

    #[test]
    fn small_balanced_holdout() {
        let m = manifest_with([2; 5]);
        let (train, test) = holdout_split(&m, 0.8, 0).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
        assert!(test.class_counts().iter().all(|&n| n <= 1));
        let (train2, test2) = holdout_split(&m, 0.8, 0).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn holdout_rejects_singleton_class() {
        let m = manifest_with([1, 4, 4, 4, 4]);
        let err = holdout_split(&m, 0.8, 0).unwrap_err();
        assert!(err.to_string().contains("class too small to stratify"));
        assert!(holdout_split(&manifest_with([4; 5]), 1.0, 0).is_err());
    }

    #[test]
    fn kfold_equal_fold_sizes() {
        let m = manifest_with([91; 5]);
        let plan = stratified_kfold(&m, 5, 11).unwrap();
        assert_eq!(plan.fold_sizes(), vec![91; 5]);
    }

    #[test]
    fn kfold_two_per_class() {
        let m = manifest_with([2; 5]);
        let plan = stratified_kfold(&m, 2, 1).unwrap();
        for fold in 0..2 {
            let (_, test) = plan.split(&m, fold).unwrap();
            assert_eq!(test.class_counts(), [1; 5]);
        }
    }

    #[test]
    fn kfold_rejects_small_class() {
        let err = stratified_kfold(&manifest_with([5, 5, 4, 5, 5]), 5, 0).unwrap_err();
        assert!(err.to_string().contains("insufficient clips for stratification"));
    }

    proptest! {
        #[test]
        fn kfold_is_a_stratified_partition(
            counts in prop::array::uniform5(5usize..30),
            k in 2usize..6,
            seed in any::<u64>(),
        ) {
            let m = manifest_with(counts);
            let plan = stratified_kfold(&m, k, seed).unwrap();
            prop_assert_eq!(plan.assignment.len(), m.len());
            prop_assert_eq!(plan.fold_sizes().iter().sum::<usize>(), m.len());
            let mut seen = HashSet::new();
            for fold in 0..k {
                let (train, test) = plan.split(&m, fold).unwrap();
                prop_assert_eq!(train.len() + test.len(), m.len());
                for r in &test.records {
                    prop_assert!(seen.insert(r.clip_id.clone()));
                }
                for (c, &n) in test.class_counts().iter().enumerate() {
                    let share = counts[c] as f64 / k as f64;
                    prop_assert!((n as f64 - share).abs() < 1.0 + 1e-9);
                }
            }
            prop_assert_eq!(seen.len(), m.len());
            prop_assert_eq!(plan, stratified_kfold(&m, k, seed).unwrap());
        }

        #[test]
        fn holdout_within_one_per_class(
            counts in prop::array::uniform5(2usize..40),
            ratio in 0.5f64..0.9,
            seed in any::<u64>(),
        ) {
            let m = manifest_with(counts);
            let (train, test) = holdout_split(&m, ratio, seed).unwrap();
            prop_assert_eq!(train.len() + test.len(), m.len());
            for (c, &n) in test.class_counts().iter().enumerate() {
                let share = counts[c] as f64 * (1.0 - ratio);
                prop_assert!((n as f64 - share).abs() <= 1.0 + 1e-9, "class {} got {} share {}", c, n, share);
            }
        }
    }
}
