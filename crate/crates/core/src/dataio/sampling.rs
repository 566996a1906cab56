use serde::{Deserialize, Serialize};

use super::clip::{Clip, CLIP_FRAMES, FRAMES_PER_SECOND};
use crate::error::{Error, Result};

/// Indices `round(i·(L−1)/(n−1))` for `i = 0..n`.
pub fn sample_indices(len: usize, n: usize) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::invalid(format!("sample count must be >= 2, got {n}")));
    }
    if len < n {
        return Err(Error::ClipTooShort { have: len, need: n });
    }
    let step = (len - 1) as f64 / (n - 1) as f64;
    Ok((0..n).map(|i| (i as f64 * step).round() as usize).collect())
}

/// Uniformly resamples a raw frame sequence to exactly `n` frames, always
/// keeping the first and the last frame.
pub fn sample_frames<T: Clone>(raw: &[T], n: usize) -> Result<Vec<T>> {
    Ok(sample_indices(raw.len(), n)?
        .into_iter()
        .map(|i| raw[i].clone())
        .collect())
}

/// Observation horizon: `seconds` before the maneuver, in `-4..=0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct HorizonSpec(i32);

impl HorizonSpec {
    pub const ALL_SECONDS: [i32; 5] = [0, -1, -2, -3, -4];

    pub fn new(seconds: i32) -> Result<Self> {
        if (-4..=0).contains(&seconds) {
            Ok(Self(seconds))
        } else {
            Err(Error::invalid(format!("horizon {seconds} outside -4..=0")))
        }
    }

    pub fn seconds(self) -> i32 {
        self.0
    }

    pub fn observed_frames(self) -> usize {
        FRAMES_PER_SECOND * (5 + self.0) as usize
    }

    /// The standard table order: T=0 first down to T=-4.
    pub fn all() -> Vec<HorizonSpec> {
        Self::ALL_SECONDS.iter().map(|&t| HorizonSpec(t)).collect()
    }
}

impl TryFrom<i32> for HorizonSpec {
    type Error = Error;
    fn try_from(v: i32) -> Result<Self> {
        HorizonSpec::new(v)
    }
}

impl From<HorizonSpec> for i32 {
    fn from(h: HorizonSpec) -> i32 {
        h.0
    }
}

/// Keeps only the frames observed up to the horizon, in every branch.
pub fn truncate_to_horizon(clip: &Clip, h: HorizonSpec) -> Clip {
    let keep = h.observed_frames().min(CLIP_FRAMES);
    let mut out = clip.clone();
    for frames in out.branches.values_mut() {
        frames.truncate(keep);
    }
    out
}
