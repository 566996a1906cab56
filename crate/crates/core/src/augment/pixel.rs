//! Per-channel intensity operations used by AugMix.

use crate::dataio::Frame;
use crate::error::{Error, Result};

fn map_channels(frame: &Frame, lut: impl Fn(usize) -> [u8; 256]) -> Frame {
    let luts: Vec<[u8; 256]> = (0..3).map(lut).collect();
    let mut out = frame.clone();
    for px in out.data_mut().chunks_exact_mut(3) {
        for c in 0..3 {
            px[c] = luts[c][px[c] as usize];
        }
    }
    out
}

fn histograms(frame: &Frame) -> [[u32; 256]; 3] {
    let mut h = [[0u32; 256]; 3];
    for px in frame.data().chunks_exact(3) {
        for c in 0..3 {
            h[c][px[c] as usize] += 1;
        }
    }
    h
}

/// Stretches each channel's observed `[min, max]` to `[0, 255]`. Flat
/// channels are left unchanged.
pub fn autocontrast(frame: &Frame) -> Frame {
    let hist = histograms(frame);
    map_channels(frame, |c| {
        let lo = hist[c].iter().position(|&n| n > 0).unwrap_or(0);
        let hi = hist[c].iter().rposition(|&n| n > 0).unwrap_or(255);
        let mut lut = [0u8; 256];
        for (v, out) in lut.iter_mut().enumerate() {
            *out = if hi <= lo {
                v as u8
            } else {
                let scaled = (v as f64 - lo as f64) * 255.0 / (hi - lo) as f64;
                scaled.round().clamp(0.0, 255.0) as u8
            };
        }
        lut
    })
}

/// Per-channel histogram equalization (cumulative-count lookup table,
/// same construction as PIL's `ImageOps.equalize`).
pub fn equalize(frame: &Frame) -> Frame {
    let hist = histograms(frame);
    map_channels(frame, |c| {
        let h = &hist[c];
        let mut lut = [0u8; 256];
        let last = h.iter().rposition(|&n| n > 0).map_or(0, |i| h[i]);
        let total: u32 = h.iter().sum();
        let step = (total - last) / 255;
        if step == 0 {
            for (v, out) in lut.iter_mut().enumerate() {
                *out = v as u8;
            }
            return lut;
        }
        let mut n = step / 2;
        for (v, out) in lut.iter_mut().enumerate() {
            *out = (n / step).min(255) as u8;
            n += h[v];
        }
        lut
    })
}

/// Keeps the top `bits` bits of every value.
pub fn posterize(frame: &Frame, bits: u8) -> Result<Frame> {
    if !(1..=8).contains(&bits) {
        return Err(Error::invalid(format!("posterize bits {bits} not in 1..=8")));
    }
    let mask = !((1u16 << (8 - bits)) - 1) as u8;
    Ok(map_channels(frame, |_| {
        let mut lut = [0u8; 256];
        for (v, out) in lut.iter_mut().enumerate() {
            *out = v as u8 & mask;
        }
        lut
    }))
}

/// Inverts every value at or above `threshold`. Thresholds above 255 are
/// clamped to 256, which leaves the frame unchanged.
pub fn solarize(frame: &Frame, threshold: u16) -> Frame {
    let threshold = threshold.min(256);
    map_channels(frame, |_| {
        let mut lut = [0u8; 256];
        for (v, out) in lut.iter_mut().enumerate() {
            *out = if v as u16 >= threshold { 255 - v as u8 } else { v as u8 };
        }
        lut
    })
}
