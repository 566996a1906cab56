//! The four-branch network: appearance encoders (backbone, DropBlock,
//! pooling, LSTM, global attention), motion encoders (two stacked LSTMs over
//! patch means), the fusion head, and the ISDA loss.

mod attention;
mod backbone;
mod branches;
mod checkpoint;
mod dropblock;
mod head;
mod isda;
mod lstm;
mod model;
mod ops;
mod params;

pub use attention::{softmax_f32, AttentionCache, GlobalAttention};
pub use backbone::{Backbone, BackboneKind, BackboneSpec, FeatureExtractor, TinyConv, FEATURE_SIDE};
pub use branches::{
    patch_reduce, resize, AppearanceBranch, ChannelNorm, FlowBranch, FLOW_FEATURES, FLOW_GRID,
};
pub use checkpoint::{
    load_checkpoint, read_header, save_checkpoint, CheckpointHeader, TensorInfo, CHECKPOINT_VERSION,
};
pub use dropblock::{dropblock, dropblock_mask, DropBlockParams};
pub use head::FusionHead;
pub use isda::{
    cross_entropy, isda_lambda, isda_loss, isda_loss_soft, softmax, ClassifierView, IsdaOutput,
    IsdaState,
};
pub use lstm::{Lstm, LstmCache};
pub use model::{
    argmax, BranchDims, ForwardOutput, Mode, Model, ModelCache, ModelConfig, PreparedClip, Scenario,
};
pub use params::{Grads, Init, ParamId, ParamStore, Tensor};
