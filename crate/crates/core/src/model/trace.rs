use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How much of the forward pass is recorded.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "kebab-case")]
pub enum CaptureLevel {
    None,
    /// Quantities at the final position only.
    #[default]
    FinalPosition,
    /// Every position, every attention pattern, and per-source weighted values.
    Full,
}

/// Intermediate quantities of one forward pass. Vectors indexed by layer have
/// `n_layers` entries, except `resid`, which also holds the embedding.
#[derive(Debug, Clone, Default)]
pub struct ActivationTrace {
    pub level: CaptureLevel,
    pub seq_len: usize,
    /// Final-position residual stream `x_T^0 ..= x_T^L` (before the final LN).
    pub resid: Vec<Array1<f32>>,
    /// Attention output `a_T^l`, biases included.
    pub attn_out: Vec<Array1<f32>>,
    /// MLP output `m_T^l`, biases included.
    pub mlp_out: Vec<Array1<f32>>,
    /// MLP coefficients `k_T^l`, length `d_mlp`.
    pub mlp_coeffs: Vec<Array1<f32>>,
    /// Per-head outputs `r_T^{l,h}` as rows of an `(H, d)` matrix, bias excluded.
    pub head_out: Vec<Array2<f32>>,
    /// Final-position attention rows `A^{l,h}[T, :]`, `(H, T)`.
    pub pattern_final: Vec<Array2<f32>>,
    pub full: Option<FullTrace>,
}

#[derive(Debug, Clone)]
pub struct FullTrace {
    /// Residual at every position, `L + 1` entries of `(T, d)`.
    pub resid: Vec<Array2<f32>>,
    /// Attention patterns, `L` entries of `(H, T, T)`.
    pub patterns: Vec<Array3<f32>>,
    /// Weighted values `r_{T,j}^{l,h}` for the final query, `L` entries of `(H, T, d)`.
    pub head_src: Vec<Array3<f32>>,
}

impl ActivationTrace {
    pub fn require(&self, needed: CaptureLevel) -> Result<()> {
        if self.level < needed {
            return Err(Error::CaptureInsufficient {
                needed,
                found: self.level,
            });
        }
        Ok(())
    }

    pub fn n_layers(&self) -> usize {
        self.attn_out.len()
    }

    /// `A^{l,h}[query, key]`. The final query row is available at
    /// `FinalPosition`; other rows need a full trace.
    pub fn attention_weight_at(
        &self,
        layer: usize,
        head: usize,
        query: usize,
        key: usize,
    ) -> Result<f32> {
        self.require(CaptureLevel::FinalPosition)?;
        let t = self.seq_len;
        if layer >= self.pattern_final.len()
            || head >= self.pattern_final[layer].nrows()
            || query >= t
            || key >= t
        {
            return Err(Error::InvalidArgument(format!(
                "attention index L{layer}H{head}[{query}, {key}] out of range for {} layers, T={t}",
                self.pattern_final.len()
            )));
        }
        if query == t - 1 {
            return Ok(self.pattern_final[layer][[head, key]]);
        }
        let full = self.full.as_ref().ok_or(Error::CaptureInsufficient {
            needed: CaptureLevel::Full,
            found: self.level,
        })?;
        Ok(full.patterns[layer][[head, query, key]])
    }
}
