//! GPT-2 forward pass with activation capture and intervention hooks.

mod config;
mod forward;
mod hooks;
pub mod ops;
mod trace;
mod weights;

pub use config::{ModelConfig, ModelId, GPT2_CONTEXT, GPT2_VOCAB};
pub use forward::{forward, logits};
pub use hooks::{edit_delta, Hook, SwapMode};
pub use ops::next_token_distribution;
pub use trace::{ActivationTrace, CaptureLevel, FullTrace};
pub use weights::{Block, LayerNormParams, ModelWeights};

use std::path::Path;

use crate::error::Result;

/// Loads `config.json` and `model.safetensors` from a checkpoint directory.
pub fn load_checkpoint_dir(dir: &Path) -> Result<ModelWeights> {
    let config = ModelConfig::from_hub_file(&dir.join("config.json"))?;
    ModelWeights::load(&dir.join("model.safetensors"), &config)
}
