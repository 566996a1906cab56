use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::dataio::{Frame, ManeuverLabel};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const MAX_SHIFT: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslateParams {
    pub dx: i32,
    pub dy: i32,
}

impl TranslateParams {
    pub fn new(dx: i32, dy: i32) -> Result<Self> {
        let p = Self { dx, dy };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dx.abs() > MAX_SHIFT || self.dy.abs() > MAX_SHIFT {
            return Err(Error::invalid(format!(
                "translation ({}, {}) exceeds {MAX_SHIFT} pixels",
                self.dx, self.dy
            )));
        }
        Ok(())
    }

    pub fn sample(rng: &mut Rng) -> Self {
        Self {
            dx: rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
            dy: rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
        }
    }
}

fn shift_frame(f: &Frame, dx: i32, dy: i32) -> Frame {
    let (h, w) = f.dims();
    let mut out = Frame::filled(h, w, 0);
    for y in 0..h as i32 {
        let sy = y - dy;
        if sy < 0 || sy >= h as i32 {
            continue;
        }
        for x in 0..w as i32 {
            let sx = x - dx;
            if sx < 0 || sx >= w as i32 {
                continue;
            }
            for c in 0..3 {
                out.set(y as usize, x as usize, c, f.get(sy as usize, sx as usize, c));
            }
        }
    }
    out
}

/// Shifts every frame by `(dx, dy)`; vacated pixels become 0.
pub fn translate(frames: &[Frame], p: TranslateParams) -> Result<Vec<Frame>> {
    p.validate()?;
    Ok(frames.iter().map(|f| shift_frame(f, p.dx, p.dy)).collect())
}

fn mirror_frame(f: &Frame) -> Frame {
    let (h, w) = f.dims();
    let mut out = f.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                out.set(y, x, c, f.get(y, w - 1 - x, c));
            }
        }
    }
    out
}

pub fn flip_frames(frames: &[Frame]) -> Vec<Frame> {
    frames.iter().map(mirror_frame).collect()
}

/// Mirrors every frame left-to-right and swaps the label's side.
pub fn flip_lr(frames: &[Frame], label: ManeuverLabel) -> (Vec<Frame>, ManeuverLabel) {
    (flip_frames(frames), label.mirror())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoutParams {
    pub side: usize,
    pub fill: u8,
}

/// Top-left corner of a cutout square, drawn so the square lies inside the
/// frame.
pub fn cutout_position(h: usize, w: usize, side: usize, rng: &mut Rng) -> Result<(usize, usize)> {
    if side == 0 || side > h.min(w) {
        return Err(Error::invalid(format!(
            "cutout side {side} not in 1..={}",
            h.min(w)
        )));
    }
    Ok((rng.random_range(0..=h - side), rng.random_range(0..=w - side)))
}

pub fn cutout_at(frames: &[Frame], p: CutoutParams, y0: usize, x0: usize) -> Vec<Frame> {
    frames
        .iter()
        .map(|f| {
            let mut out = f.clone();
            for y in y0..y0 + p.side {
                for x in x0..x0 + p.side {
                    for c in 0..3 {
                        out.set(y, x, c, p.fill);
                    }
                }
            }
            out
        })
        .collect()
}

/// Masks one square, at a single position drawn per call, in every frame.
pub fn cutout(frames: &[Frame], p: CutoutParams, rng: &mut Rng) -> Result<Vec<Frame>> {
    let Some(first) = frames.first() else {
        return Ok(Vec::new());
    };
    let (h, w) = first.dims();
    let (y0, x0) = cutout_position(h, w, p.side, rng)?;
    Ok(cutout_at(frames, p, y0, x0))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;

    fn lit(h: usize, w: usize, y: usize, x: usize) -> Frame {
        let mut f = Frame::filled(h, w, 0);
        for c in 0..3 {
            f.set(y, x, c, 255);
        }
        f
    }

    #[test]
    fn translate_identity_and_shift() {
        let f = vec![lit(20, 20, 10, 10); 15];
        assert_eq!(translate(&f, TranslateParams::new(0, 0).unwrap()).unwrap(), f);
        let out = translate(&f, TranslateParams::new(4, 0).unwrap()).unwrap();
        assert_eq!(out.len(), 15);
        for frame in &out {
            assert_eq!(frame, &lit(20, 20, 10, 14));
            for y in 0..20 {
                assert_eq!(frame.get(y, 0, 0), 0);
            }
        }
        assert!(TranslateParams::new(5, 0).is_err());
        assert!(translate(&f, TranslateParams { dx: 0, dy: -5 }).is_err());
    }

    #[test]
    fn translate_back_and_forth_matches_on_interior() {
        let mut rng = Rng::seed_from_u64(5);
        let data: Vec<u8> = (0..12 * 16 * 3).map(|_| rng.random()).collect();
        let f = vec![Frame::new(12, 16, data).unwrap()];
        let there = translate(&f, TranslateParams::new(2, 0).unwrap()).unwrap();
        let back = translate(&there, TranslateParams::new(-2, 0).unwrap()).unwrap();
        // Columns 0..w-2 survive both shifts; the last two were filled.
        for y in 0..12 {
            for x in 0..16 {
                for c in 0..3 {
                    if x < 14 {
                        assert_eq!(back[0].get(y, x, c), f[0].get(y, x, c));
                    } else {
                        assert_eq!(back[0].get(y, x, c), 0);
                    }
                }
            }
        }
    }

    #[test]
    fn flip_is_involution_and_swaps_labels() {
        let f = vec![lit(5, 7, 1, 2)];
        let (once, l1) = flip_lr(&f, ManeuverLabel::LeftTurn);
        assert_eq!(l1, ManeuverLabel::RightTurn);
        assert_eq!(once[0], lit(5, 7, 1, 4));
        let (twice, l2) = flip_lr(&once, l1);
        assert_eq!((twice, l2), (f.clone(), ManeuverLabel::LeftTurn));
        assert_eq!(flip_lr(&f, ManeuverLabel::GoStraight).1, ManeuverLabel::GoStraight);
    }

    #[test]
    fn cutout_full_cover_and_single_pixel() {
        let f = vec![Frame::filled(6, 9, 200); 15];
        let mut rng = Rng::seed_from_u64(1);
        let out = cutout(&f, CutoutParams { side: 6, fill: 0 }, &mut rng).unwrap();
        for frame in &out {
            let zeros = frame.data().chunks(3).filter(|p| p == &[0, 0, 0]).count();
            assert_eq!(zeros, 36);
        }
        let out = cutout(&f, CutoutParams { side: 1, fill: 0 }, &mut rng).unwrap();
        for (a, b) in out.iter().zip(&f) {
            let changed = a.data().chunks(3).zip(b.data().chunks(3)).filter(|(x, y)| x != y).count();
            assert_eq!(changed, 1);
        }
        assert!(cutout(&f, CutoutParams { side: 7, fill: 0 }, &mut rng).is_err());
    }

    #[test]
    fn cutout_is_seed_deterministic() {
        let f = vec![Frame::filled(16, 16, 100); 3];
        let p = CutoutParams { side: 4, fill: 0 };
        let a = cutout(&f, p, &mut Rng::seed_from_u64(42)).unwrap();
        let b = cutout(&f, p, &mut Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }
}
