//! Deterministic synthetic driving clips.
//!
//! The inside view shows a bright gaze marker that drifts toward the
//! maneuver side; the outside view shows a lane line drifting the opposite
//! way. Turns drift the full amplitude, lane changes about half of it, and
//! going straight does not drift. Drift follows a back-loaded ramp, so the
//! first seconds carry almost no class signal.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::clip::{BranchKind, Clip, Frame, CLIP_FRAMES};
use super::flow::compute_flow_standin;
use super::label::ManeuverLabel;
use super::manifest::{write_frames_dir, DatasetManifest, ManifestRecord, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub n_clips: usize,
    pub seed: u64,
    /// Square frame side in pixels.
    pub size: usize,
}

impl SynthOptions {
    pub fn new(n_clips: usize, seed: u64) -> Self {
        Self {
            n_clips,
            seed,
            size: 32,
        }
    }
}

/// Fraction of the full drift reached at frame `t` (of 15). Zero for the
/// first five frames, then quadratic up to 1 at the last frame.
pub fn drift_ramp(t: usize) -> f32 {
    let u = (t as f32 - 4.0).max(0.0) / (CLIP_FRAMES as f32 - 5.0);
    u * u
}

/// Full drift in pixels for a label, as a fraction of the frame side.
fn drift_fraction(label: ManeuverLabel) -> f32 {
    let mag = if label.is_turn() {
        0.34
    } else if label == ManeuverLabel::GoStraight {
        0.0
    } else {
        0.17
    };
    mag * label.direction() as f32
}

#[derive(Debug, Clone)]
pub struct SyntheticClip {
    pub label: ManeuverLabel,
    pub inside: Vec<Frame>,
    pub outside: Vec<Frame>,
    /// Horizontal marker centre per inside frame, before pixel noise.
    pub marker_x: Vec<f32>,
}

impl SyntheticClip {
    /// Assembles a four-branch clip, deriving the motion branches.
    pub fn into_clip(self, id: &str) -> Clip {
        let inside_flow = compute_flow_standin(&self.inside).expect("synthetic clips have 15 frames");
        let outside_flow = compute_flow_standin(&self.outside).expect("synthetic clips have 15 frames");
        let branches = [
            (BranchKind::InsideAppearance, self.inside),
            (BranchKind::OutsideAppearance, self.outside),
            (BranchKind::InsideFlow, inside_flow),
            (BranchKind::OutsideFlow, outside_flow),
        ]
        .into_iter()
        .collect();
        Clip {
            id: id.to_string(),
            label: self.label,
            driver_id: "synth".into(),
            branches,
        }
    }
}

fn blend(px: &mut [f32], color: [f32; 3], alpha: f32) {
    for c in 0..3 {
        px[c] = px[c] * (1.0 - alpha) + color[c] * alpha;
    }
}

fn quantize(buf: &[f32], size: usize, noise: &[f32]) -> Frame {
    let data = buf
        .iter()
        .zip(noise)
        .map(|(v, n)| (v + n).round().clamp(0.0, 255.0) as u8)
        .collect();
    Frame::new(size, size, data).expect("synthetic frame dims")
}

/// Renders one clip. Pure function of `(label, seed, index, size)`.
pub fn render_clip(label: ManeuverLabel, seed: u64, index: usize, size: usize) -> SyntheticClip {
    let mut r = rng::stream(seed, "synth", &[index as u64]);
    let s = size as f32;
    let drift = drift_fraction(label) * s * r.random_range(0.85..1.15);
    let x0_in = s / 2.0 + r.random_range(-0.05..0.05) * s;
    let y_in = s * (0.40 + r.random_range(-0.06..0.06));
    let x0_out = s / 2.0 + r.random_range(-0.06..0.06) * s;
    let wobble_phase = r.random_range(0.0..std::f32::consts::TAU);
    let wobble_amp = 0.02 * s;
    let marker_sigma = 0.05 * s;
    let line_half = 0.04 * s;
    let noise_in = Normal::new(0.0f32, 3.0).unwrap();
    let noise_out = Normal::new(0.0f32, 5.0).unwrap();

    let mut inside = Vec::with_capacity(CLIP_FRAMES);
    let mut outside = Vec::with_capacity(CLIP_FRAMES);
    let mut marker_x = Vec::with_capacity(CLIP_FRAMES);
    for t in 0..CLIP_FRAMES {
        let ramp = drift_ramp(t);
        let wobble = wobble_amp * (wobble_phase + t as f32 * 0.9).sin();
        let mx = x0_in + drift * ramp + wobble;
        marker_x.push(mx);

        let mut buf = vec![0f32; size * size * 3];
        for y in 0..size {
            for x in 0..size {
                let px = &mut buf[(y * size + x) * 3..][..3];
                let shade = 25.0 + 20.0 * y as f32 / s;
                px.copy_from_slice(&[shade, shade * 0.9, shade * 0.8]);
                let (dx, dy) = (x as f32 - mx, y as f32 - y_in);
                let a = (-(dx * dx + dy * dy) / (2.0 * marker_sigma * marker_sigma)).exp();
                blend(px, [235.0, 235.0, 190.0], a);
            }
        }
        let n: Vec<f32> = (0..buf.len()).map(|_| noise_in.sample(&mut r)).collect();
        inside.push(quantize(&buf, size, &n));

        let lx = x0_out - 0.8 * drift * ramp - 0.5 * wobble;
        let horizon = (0.3 * s) as usize;
        let mut buf = vec![0f32; size * size * 3];
        for y in 0..size {
            for x in 0..size {
                let px = &mut buf[(y * size + x) * 3..][..3];
                if y < horizon {
                    px.copy_from_slice(&[90.0, 120.0, 170.0]);
                } else {
                    px.copy_from_slice(&[70.0, 70.0, 70.0]);
                    let d = (x as f32 - lx).abs();
                    let a = (line_half + 0.5 - d).clamp(0.0, 1.0);
                    blend(px, [225.0, 200.0, 40.0], a);
                }
            }
        }
        let n: Vec<f32> = (0..buf.len()).map(|_| noise_out.sample(&mut r)).collect();
        outside.push(quantize(&buf, size, &n));
    }
    SyntheticClip {
        label,
        inside,
        outside,
        marker_x,
    }
}

/// Writes a class-balanced synthetic dataset (all four branches) plus its
/// manifest into `out_dir`.
pub fn generate_synthetic(opts: SynthOptions, out_dir: &Path) -> Result<DatasetManifest> {
    if opts.n_clips < 5 || !opts.n_clips.is_multiple_of(5) {
        return Err(Error::invalid(format!(
            "n_clips must be a positive multiple of 5, got {}",
            opts.n_clips
        )));
    }
    if opts.size < 8 {
        return Err(Error::invalid(format!("frame size {} too small", opts.size)));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let records: Vec<ManifestRecord> = (0..opts.n_clips)
        .into_par_iter()
        .map(|i| {
            let label = ManeuverLabel::ALL[i % 5];
            let clip_id = format!("clip_{i:05}");
            let clip = render_clip(label, opts.seed, i, opts.size);
            let inside_flow = compute_flow_standin(&clip.inside)?;
            let outside_flow = compute_flow_standin(&clip.outside)?;
            let mut dirs = std::collections::BTreeMap::new();
            for (kind, frames) in [
                (BranchKind::InsideAppearance, &clip.inside),
                (BranchKind::OutsideAppearance, &clip.outside),
                (BranchKind::InsideFlow, &inside_flow),
                (BranchKind::OutsideFlow, &outside_flow),
            ] {
                let rel = format!("{clip_id}/{}", kind.dir_name());
                write_frames_dir(&out_dir.join(&rel), frames)?;
                dirs.insert(kind, rel);
            }
            Ok(ManifestRecord {
                clip_id,
                label,
                driver_id: format!("synth_driver_{:02}", i % 10),
                dirs,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = DatasetManifest::new(out_dir, records)?;
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_is_back_loaded() {
        assert_eq!(drift_ramp(0), 0.0);
        assert_eq!(drift_ramp(4), 0.0);
        assert_eq!(drift_ramp(14), 1.0);
        let early: f32 = (0..9).map(drift_ramp).sum();
        let late: f32 = (9..15).map(drift_ramp).sum();
        assert!(late > 4.0 * early);
    }

    #[test]
    fn marker_drifts_toward_maneuver_side() {
        for (i, label) in ManeuverLabel::ALL.iter().enumerate() {
            let c = render_clip(*label, 3, i, 32);
            let shift = c.marker_x[14] - c.marker_x[0];
            match label.direction() {
                0 => assert!(shift.abs() < 2.0, "{label}: {shift}"),
                d => assert!(shift * d as f32 > 3.0, "{label}: {shift}"),
            }
        }
    }

    #[test]
    fn render_is_deterministic() {
        let a = render_clip(ManeuverLabel::RightTurn, 9, 4, 32);
        let b = render_clip(ManeuverLabel::RightTurn, 9, 4, 32);
        assert_eq!(a.inside, b.inside);
        assert_eq!(a.outside, b.outside);
    }

    #[test]
    fn rejects_unbalanced_count() {
        let dir = tempfile::tempdir().unwrap();
        assert!(generate_synthetic(SynthOptions::new(12, 0), dir.path()).is_err());
    }
}
