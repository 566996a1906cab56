use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::augmix::{AugmixDraw, AugmixParams};
use super::geometric::{
    cutout, flip_frames, translate, CutoutParams, TranslateParams, MAX_SHIFT,
};
use crate::dataio::{Clip, Frame};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugOp {
    Fliplr,
    Translate,
    Cutout,
    Augmix,
}

/// The ablation ladder: A = none, B = A+flip, C = B+cutout, D = C+AugMix,
/// E = D+translate+label smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Preset {
    A,
    B,
    C,
    D,
    E,
}

/// Label smoothing switched on by preset E.
pub const PRESET_E_SMOOTHING: f64 = 0.1;

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::A, Preset::B, Preset::C, Preset::D, Preset::E];

    pub fn ops(self) -> BTreeSet<AugOp> {
        use AugOp::*;
        let list: &[AugOp] = match self {
            Preset::A => &[],
            Preset::B => &[Fliplr],
            Preset::C => &[Fliplr, Cutout],
            Preset::D => &[Fliplr, Cutout, Augmix],
            Preset::E => &[Fliplr, Cutout, Augmix, Translate],
        };
        list.iter().copied().collect()
    }

    pub fn label_smoothing(self) -> f64 {
        if self == Preset::E {
            PRESET_E_SMOOTHING
        } else {
            0.0
        }
    }

    pub fn letter(self) -> char {
        match self {
            Preset::A => 'A',
            Preset::B => 'B',
            Preset::C => 'C',
            Preset::D => 'D',
            Preset::E => 'E',
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Preset::A),
            "B" => Ok(Preset::B),
            "C" => Ok(Preset::C),
            "D" => Ok(Preset::D),
            "E" => Ok(Preset::E),
            other => Err(Error::invalid(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugPipelineConfig {
    pub enabled: BTreeSet<AugOp>,
    pub flip_prob: f64,
    /// Cutout square side as a fraction of the shorter frame side.
    pub cutout_fraction: f64,
    pub cutout_fill: u8,
    pub augmix: AugmixParams,
}

impl Default for AugPipelineConfig {
    fn default() -> Self {
        Self::preset(Preset::E)
    }
}

impl AugPipelineConfig {
    pub fn preset(p: Preset) -> Self {
        Self {
            enabled: p.ops(),
            flip_prob: 0.5,
            cutout_fraction: 0.25,
            cutout_fill: 0,
            augmix: AugmixParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::invalid(format!("flip_prob {} not in [0,1]", self.flip_prob)));
        }
        if !(self.cutout_fraction > 0.0 && self.cutout_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "cutout_fraction {} not in (0,1]",
                self.cutout_fraction
            )));
        }
        self.augmix.validate()
    }

    pub fn has(&self, op: AugOp) -> bool {
        self.enabled.contains(&op)
    }

    pub fn cutout_params(&self, frame: &Frame) -> CutoutParams {
        let short = frame.height().min(frame.width());
        let side = ((short as f64 * self.cutout_fraction).round() as usize).clamp(1, short);
        CutoutParams {
            side,
            fill: self.cutout_fill,
        }
    }
}

/// Applies a pipeline config to whole clips: translate → flip → cutout →
/// AugMix. Flow branches only ever see translate and flip.
#[derive(Debug, Clone)]
pub struct Augmentor {
    cfg: AugPipelineConfig,
}

impl Augmentor {
    pub fn config(&self) -> &AugPipelineConfig {
        &self.cfg
    }

    pub fn apply(&self, clip: &Clip, rng: &mut Rng) -> Result<Clip> {
        let cfg = &self.cfg;
        let mut out = clip.clone();

        if cfg.has(AugOp::Translate) {
            let p = TranslateParams::sample(rng);
            for frames in out.branches.values_mut() {
                *frames = translate(frames, p)?;
            }
        }
        if cfg.has(AugOp::Fliplr) && rng.random_bool(cfg.flip_prob) {
            for frames in out.branches.values_mut() {
                *frames = flip_frames(frames);
            }
            out.label = out.label.mirror();
        }
        for (kind, frames) in out.branches.iter_mut() {
            if kind.is_flow() || frames.is_empty() {
                continue;
            }
            if cfg.has(AugOp::Cutout) {
                let p = cfg.cutout_params(&frames[0]);
                *frames = cutout(frames, p, rng)?;
            }
            if cfg.has(AugOp::Augmix) {
                for f in frames.iter_mut() {
                    *f = AugmixDraw::sample(&cfg.augmix, rng).apply(f);
                }
            }
        }
        Ok(out)
    }
}

pub fn build_pipeline(cfg: &AugPipelineConfig) -> Result<Augmentor> {
    cfg.validate()?;
    Ok(Augmentor { cfg: cfg.clone() })
}

/// Translation used by the test-time "Translate" variant.
pub const OTC_SHIFT: TranslateParams = TranslateParams {
    dx: MAX_SHIFT,
    dy: MAX_SHIFT,
};

/// Test-time variants `[original, translated, cutout]`. Labels are never
/// changed. Translation covers every branch; cutout only appearance.
pub fn otc_variants(clip: &Clip, cutout_fraction: f64, rng: &mut Rng) -> Result<[Clip; 3]> {
    let mut shifted = clip.clone();
    for frames in shifted.branches.values_mut() {
        *frames = translate(frames, OTC_SHIFT)?;
    }
    let cfg = AugPipelineConfig {
        cutout_fraction,
        ..AugPipelineConfig::preset(Preset::A)
    };
    let mut masked = clip.clone();
    for (kind, frames) in masked.branches.iter_mut() {
        if kind.is_flow() || frames.is_empty() {
            continue;
        }
        let p = cfg.cutout_params(&frames[0]);
        *frames = cutout(frames, p, rng)?;
    }
    Ok([clip.clone(), shifted, masked])
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use rand::SeedableRng;

    use super::*;
    use crate::dataio::{BranchKind, ManeuverLabel};

    fn random_clip(rng: &mut Rng, label: ManeuverLabel) -> Clip {
        let mut branches = BTreeMap::new();
        for kind in BranchKind::ALL {
            let frames = (0..15)
                .map(|_| Frame::new(16, 16, (0..16 * 16 * 3).map(|_| rng.random()).collect()).unwrap())
                .collect();
            branches.insert(kind, frames);
        }
        Clip {
            id: "clip".into(),
            label,
            driver_id: "d".into(),
            branches,
        }
    }

    #[test]
    fn preset_ladder_nests() {
        for w in Preset::ALL.windows(2) {
            assert!(w[0].ops().is_subset(&w[1].ops()));
        }
        assert!(Preset::A.ops().is_empty());
        assert!(Preset::E.ops().contains(&AugOp::Translate));
        assert_eq!(Preset::E.label_smoothing(), 0.1);
        assert_eq!(Preset::D.label_smoothing(), 0.0);
        for p in Preset::ALL {
            assert_eq!(p.to_string().parse::<Preset>().unwrap(), p);
        }
    }

    #[test]
    fn preset_a_is_identity() {
        let mut rng = Rng::seed_from_u64(0);
        let clip = random_clip(&mut rng, ManeuverLabel::LeftTurn);
        let aug = build_pipeline(&AugPipelineConfig::preset(Preset::A)).unwrap();
        assert_eq!(aug.apply(&clip, &mut rng).unwrap(), clip);
    }

    #[test]
    fn forced_flip_mirrors_every_branch_and_label() {
        let mut rng = Rng::seed_from_u64(1);
        let clip = random_clip(&mut rng, ManeuverLabel::LeftLaneChange);
        let cfg = AugPipelineConfig {
            flip_prob: 1.0,
            ..AugPipelineConfig::preset(Preset::B)
        };
        let out = build_pipeline(&cfg).unwrap().apply(&clip, &mut rng).unwrap();
        assert_eq!(out.label, ManeuverLabel::RightLaneChange);
        for kind in BranchKind::ALL {
            assert_eq!(out.branches[&kind], flip_frames(&clip.branches[&kind]));
        }
    }

    #[test]
    fn appearance_only_ops_leave_flow_alone() {
        let mut rng = Rng::seed_from_u64(2);
        let clip = random_clip(&mut rng, ManeuverLabel::RightTurn);
        let cfg = AugPipelineConfig {
            enabled: [AugOp::Cutout, AugOp::Augmix].into_iter().collect(),
            ..Default::default()
        };
        let out = build_pipeline(&cfg).unwrap().apply(&clip, &mut rng).unwrap();
        assert_eq!(out.branches[&BranchKind::InsideFlow], clip.branches[&BranchKind::InsideFlow]);
        assert_eq!(out.branches[&BranchKind::OutsideFlow], clip.branches[&BranchKind::OutsideFlow]);
        assert_ne!(
            out.branches[&BranchKind::InsideAppearance],
            clip.branches[&BranchKind::InsideAppearance]
        );
        out.validate().unwrap();
    }

    #[test]
    fn otc_variants_shape() {
        let mut rng = Rng::seed_from_u64(3);
        let clip = random_clip(&mut rng, ManeuverLabel::GoStraight);
        let v = otc_variants(&clip, 0.25, &mut Rng::seed_from_u64(9)).unwrap();
        assert_eq!(v[0], clip);
        assert!(v.iter().all(|c| c.label == clip.label));
        assert_ne!(v[1], clip);
        assert_eq!(v[2].branches[&BranchKind::InsideFlow], clip.branches[&BranchKind::InsideFlow]);
        let again = otc_variants(&clip, 0.25, &mut Rng::seed_from_u64(9)).unwrap();
        assert_eq!(v, again);
    }
}
