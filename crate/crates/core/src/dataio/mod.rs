//! Dataset model: labels, frames and clips, the on-disk manifest, frame
//! sampling, horizon truncation, splitting, and the synthetic generator.

mod clip;
mod flow;
mod label;
mod manifest;
mod sampling;
mod split;
pub mod synth;

pub use clip::{BranchKind, Clip, Frame, CLIP_FRAMES, FRAMES_PER_SECOND};
pub use flow::compute_flow_standin;
pub use label::{ManeuverLabel, NUM_CLASSES};
pub use manifest::{
    read_frame, read_frames_dir, write_frames_dir, DatasetManifest, ManifestRecord,
    MANIFEST_FILE,
};
pub use sampling::{sample_frames, sample_indices, truncate_to_horizon, HorizonSpec};
pub use split::{holdout_split, stratified_kfold, FoldPlan};
pub use synth::{generate_synthetic, SynthOptions};
