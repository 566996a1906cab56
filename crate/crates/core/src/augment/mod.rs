//! Image-space augmentations, the A–E pipeline presets, and the test-time
//! (original, translate, cutout) variants.

mod augmix;
mod geometric;
mod pipeline;
mod pixel;

pub use augmix::{augmix, AugmixDraw, AugmixParams, PixelOp};
pub use geometric::{
    cutout, cutout_at, cutout_position, flip_frames, flip_lr, translate, CutoutParams,
    TranslateParams, MAX_SHIFT,
};
pub use pipeline::{
    build_pipeline, otc_variants, AugOp, AugPipelineConfig, Augmentor, Preset, OTC_SHIFT,
    PRESET_E_SMOOTHING,
};
pub use pixel::{autocontrast, equalize, posterize, solarize};
