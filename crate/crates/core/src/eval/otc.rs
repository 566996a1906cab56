use crate::dataio::{Clip, ManeuverLabel, NUM_CLASSES};
use crate::error::Result;
use crate::net::{argmax, Model};
use crate::augment::otc_variants;
use crate::rng::Rng;

/// Majority over three votes. When all three differ, the voted label with
/// the largest probability summed over the variants wins (lowest index on
/// an exact tie).
pub fn otc_vote(votes: [usize; 3], probs: &[[f64; NUM_CLASSES]; 3]) -> usize {
    for &v in &votes {
        if votes.iter().filter(|&&w| w == v).count() >= 2 {
            return v;
        }
    }
    let summed = |c: usize| probs.iter().map(|p| p[c]).sum::<f64>();
    let mut candidates = votes;
    candidates.sort_unstable();
    candidates
        .into_iter()
        .fold(None::<(usize, f64)>, |best, c| {
            let s = summed(c);
            match best {
                Some((_, bs)) if bs >= s => best,
                _ => Some((c, s)),
            }
        })
        .map(|(c, _)| c)
        .expect("three candidates")
}

/// Runs the model on the original, translated and cutout variants and
/// combines their predictions with [`otc_vote`].
pub fn otc_predict(model: &Model, clip: &Clip, cutout_fraction: f64, rng: &mut Rng) -> Result<(ManeuverLabel, [[f64; NUM_CLASSES]; 3])> {
    let variants = otc_variants(clip, cutout_fraction, rng)?;
    let mut probs = [[0.0; NUM_CLASSES]; 3];
    let mut votes = [0usize; 3];
    for (i, v) in variants.iter().enumerate() {
        let p = model.predict_proba(&model.prepare(v)?)?;
        probs[i].copy_from_slice(&p);
        votes[i] = argmax(&p);
    }
    let label = ManeuverLabel::from_index(otc_vote(votes, &probs)).expect("class index");
    Ok((label, probs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn onehot(i: usize, v: f64) -> [f64; NUM_CLASSES] {
        let mut p = [0.0; NUM_CLASSES];
        p[i] = v;
        p
    }

    #[test]
    fn majority_cases() {
        let probs = [[0.2; NUM_CLASSES]; 3];
        assert_eq!(otc_vote([1, 1, 1], &probs), 1);
        assert_eq!(otc_vote([1, 1, 3], &probs), 1);
        assert_eq!(otc_vote([3, 1, 1], &probs), 1);
    }

    #[test]
    fn three_way_tie_uses_summed_probability() {
        // A:1.2, B:1.5, C:0.3 summed over the three variants.
        let probs = [
            [0.5, 0.5, 0.0, 0.0, 0.0],
            [0.4, 0.6, 0.1, 0.0, 0.0],
            [0.3, 0.4, 0.2, 0.0, 0.0],
        ];
        assert_eq!(otc_vote([0, 1, 2], &probs), 1);
        // Labels without a vote cannot win.
        let probs = [onehot(4, 0.9), onehot(4, 0.9), onehot(4, 0.9)];
        assert!([0, 1, 2].contains(&otc_vote([0, 1, 2], &probs)));
    }
}
