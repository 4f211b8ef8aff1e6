//! The trainable prompter: a single recurrent cell over a closed vocabulary
//! with exact log-probabilities, gradients and KL to a frozen reference.

mod checkpoint;
mod conditioning;
mod model;
mod params;
mod sequence;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, CheckpointManifest, TensorEntry, FORMAT_VERSION,
};
pub use conditioning::{encode_conditioning, serialize_entry};
pub use model::{
    grad_kl_divergence, grad_log_prob, kl_divergence, log_prob, next_token_probs, sample_prompt,
    DecodeOptions, Decoding,
};
pub use params::{init_params, Dims, PolicyParams, TENSOR_NAMES};
pub use sequence::{ConditioningSequence, PromptSequence};
