use super::clip::Frame;
use crate::error::{Error, Result};

/// Cheap stand-in for a dense optical-flow estimator: the signed temporal
/// difference of consecutive frames, colour coded as
/// red = brightening, blue = darkening, green = magnitude.
///
/// Output has the same length as the input; frame 0 repeats frame 1's code.
pub fn compute_flow_standin(frames: &[Frame]) -> Result<Vec<Frame>> {
    if frames.len() < 2 {
        return Err(Error::invalid(format!(
            "flow needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let dims = frames[0].dims();
    if frames.iter().any(|f| f.dims() != dims) {
        return Err(Error::Shape("flow input frames differ in size".into()));
    }
    let mut out = Vec::with_capacity(frames.len());
    for pair in frames.windows(2) {
        out.push(encode_difference(&pair[0], &pair[1]));
    }
    out.insert(0, out[0].clone());
    Ok(out)
}

fn encode_difference(prev: &Frame, cur: &Frame) -> Frame {
    let (h, w) = cur.dims();
    let mut data = vec![0u8; h * w * 3];
    for (px, (a, b)) in data
        .chunks_exact_mut(3)
        .zip(prev.data().chunks_exact(3).zip(cur.data().chunks_exact(3)))
    {
        let sum: i32 = (0..3).map(|c| b[c] as i32 - a[c] as i32).sum();
        let d = (sum as f32 / 3.0).round() as i32;
        px[0] = d.clamp(0, 255) as u8;
        px[1] = d.unsigned_abs().min(255) as u8;
        px[2] = (-d).clamp(0, 255) as u8;
    }
    Frame::new(h, w, data).expect("dims come from a valid frame")
}
