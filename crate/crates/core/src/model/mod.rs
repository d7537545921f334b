//! Small pre-norm transformer denoiser with block-causal attention and
//! hand-written reverse-mode gradients.

mod checkpoint;
mod forward;
mod gradcheck;
mod params;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, FORMAT_VERSION};
pub use forward::{
    backward, embed, embed_backward, embed_soft, forward, AttentionScheme, ForwardTrace, Slot,
    SoftResidual,
};
pub use gradcheck::{check_gradients, layer_type, GradProbe};
pub use params::{DenoiserParams, LayerParams, ModelDims};
