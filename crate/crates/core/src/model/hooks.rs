use std::sync::Arc;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::weights::ModelWeights;
use crate::error::{Error, Result};

/// How an attention swap is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwapMode {
    /// Exchange the final query row's attention weights on the two key
    /// positions before values are mixed. Changes the head output.
    #[default]
    Pattern,
    /// Exchange the two weighted-value vectors `r_{T,j}` before they are
    /// summed. The sum is unchanged, so this is a no-op on the output; kept
    /// for auditing the literal reading of the intervention.
    Literal,
}

/// An intervention applied inside one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum Hook {
    /// Adds `delta` to value vector `v^{layer,dim}` for this pass only, i.e.
    /// the MLP output at every position gains `k_t^{layer,dim} * delta`.
    ValuePatch {
        layer: usize,
        dim: usize,
        delta: Arc<Array1<f32>>,
    },
    /// Swaps attention at the final query position between two key positions.
    AttentionSwap {
        layer: usize,
        head: usize,
        pos_a: usize,
        pos_b: usize,
        mode: SwapMode,
    },
}

impl Hook {
    /// Patch realizing `v' = v - lambda1 * W_U[anchor] + lambda2 * W_U[target]`.
    pub fn value_edit(
        weights: &ModelWeights,
        layer: usize,
        dim: usize,
        anchor: u32,
        target: u32,
        lambda1: f32,
        lambda2: f32,
    ) -> Result<Hook> {
        weights.check_mlp_index(layer, dim)?;
        let delta = edit_delta(weights, anchor, target, lambda1, lambda2)?;
        Ok(Hook::ValuePatch {
            layer,
            dim,
            delta: Arc::new(delta),
        })
    }

    pub fn layer(&self) -> usize {
        match self {
            Hook::ValuePatch { layer, .. } | Hook::AttentionSwap { layer, .. } => *layer,
        }
    }

    pub fn validate(&self, cfg: &ModelConfig, seq_len: usize) -> Result<()> {
        let oob = |m: String| Err(Error::HookOutOfBounds(m));
        match self {
            Hook::ValuePatch { layer, dim, delta } => {
                if *layer >= cfg.n_layers || *dim >= cfg.d_mlp {
                    return oob(format!(
                        "value patch ({layer}, {dim}) outside {} x {}",
                        cfg.n_layers, cfg.d_mlp
                    ));
                }
                if delta.len() != cfg.d_model {
                    return oob(format!(
                        "value patch delta has length {}, expected {}",
                        delta.len(),
                        cfg.d_model
                    ));
                }
                if delta.iter().any(|x| !x.is_finite()) {
                    return oob("value patch delta is not finite".into());
                }
            }
            Hook::AttentionSwap {
                layer,
                head,
                pos_a,
                pos_b,
                ..
            } => {
                if *layer >= cfg.n_layers || *head >= cfg.n_heads {
                    return oob(format!(
                        "attention swap head L{layer}H{head} outside {} x {}",
                        cfg.n_layers, cfg.n_heads
                    ));
                }
                if *pos_a >= seq_len || *pos_b >= seq_len {
                    return oob(format!(
                        "attention swap positions ({pos_a}, {pos_b}) outside sequence of {seq_len}"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// `-lambda1 * W_U[anchor] + lambda2 * W_U[target]`.
pub fn edit_delta(
    weights: &ModelWeights,
    anchor: u32,
    target: u32,
    lambda1: f32,
    lambda2: f32,
) -> Result<Array1<f32>> {
    if anchor == target {
        return Err(Error::SelfCancellingEdit(anchor));
    }
    if !(lambda1 >= 0.0 && lambda2 >= 0.0 && lambda1.is_finite() && lambda2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "edit coefficients must be finite and non-negative, got lambda1={lambda1}, lambda2={lambda2}"
        )));
    }
    let ua = weights.unembed(anchor)?;
    let ut = weights.unembed(target)?;
    Ok(&ut * lambda2 - &ua * lambda1)
}
