//! Logit-lens projections: read any `d`-dimensional contribution as logits by
//! passing it through the pre-unembedding layer norm and the tied unembedding.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::letter::TokenText;
use crate::model::ops::{layer_norm, ln_stats, softmax};
use crate::model::{ActivationTrace, CaptureLevel, ModelWeights};

/// The normalization applied before unembedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sigma {
    /// The model's final layer norm, with its learned scale and bias.
    #[default]
    LearnedLn,
    /// Centering and scaling only.
    PlainLn,
}

/// What a projection was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Source {
    Head { layer: usize, head: usize },
    MlpDim { layer: usize, dim: usize },
    MlpLayer { layer: usize },
    Residual { layer: usize },
    Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LensProjection {
    pub source: Source,
    /// `None` for a full-vocabulary projection; otherwise the ids that
    /// `logits` refers to, in order.
    pub tokens: Option<Vec<u32>>,
    pub logits: Array1<f32>,
}

impl LensProjection {
    pub fn logit(&self, token: u32) -> Result<f32> {
        match &self.tokens {
            None => self
                .logits
                .get(token as usize)
                .copied()
                .ok_or(Error::TokenOutOfRange(token)),
            Some(ids) => ids
                .iter()
                .position(|&t| t == token)
                .map(|i| self.logits[i])
                .ok_or(Error::TokenOutOfRange(token)),
        }
    }

    fn id_at(&self, i: usize) -> u32 {
        match &self.tokens {
            None => i as u32,
            Some(ids) => ids[i],
        }
    }
}

/// Projector bound to a set of weights and a choice of normalization.
#[derive(Debug, Clone, Copy)]
pub struct Lens<'w> {
    weights: &'w ModelWeights,
    sigma: Sigma,
}

impl<'w> Lens<'w> {
    pub fn new(weights: &'w ModelWeights, sigma: Sigma) -> Self {
        Lens { weights, sigma }
    }

    pub fn weights(&self) -> &'w ModelWeights {
        self.weights
    }

    pub fn sigma(&self) -> Sigma {
        self.sigma
    }

    /// `sigma(v)`.
    pub fn normalize(&self, v: ArrayView1<'_, f32>) -> Result<Array1<f32>> {
        let d = self.weights.config.d_model;
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: v.len(),
            });
        }
        let params = match self.sigma {
            Sigma::LearnedLn => Some(&self.weights.ln_f),
            Sigma::PlainLn => None,
        };
        Ok(layer_norm(v, params, self.weights.config.ln_eps))
    }

    /// `W_U sigma(v)` over the whole vocabulary.
    pub fn project(&self, v: ArrayView1<'_, f32>) -> Result<Array1<f32>> {
        let n = self.normalize(v)?;
        Ok(self.weights.wte.dot(&n))
    }

    pub fn project_source(&self, source: Source, v: ArrayView1<'_, f32>) -> Result<LensProjection> {
        Ok(LensProjection {
            source,
            tokens: None,
            logits: self.project(v)?,
        })
    }

    /// Projection onto a subset of tokens only; cheap for scans.
    pub fn project_restricted(
        &self,
        source: Source,
        v: ArrayView1<'_, f32>,
        tokens: &[u32],
    ) -> Result<LensProjection> {
        let n = self.normalize(v)?;
        let logits = tokens
            .iter()
            .map(|&t| Ok(self.weights.unembed(t)?.dot(&n)))
            .collect::<Result<Array1<f32>>>()?;
        Ok(LensProjection {
            source,
            tokens: Some(tokens.to_vec()),
            logits,
        })
    }

    /// `logit[a] - logit[b]` of `W_U sigma(v)` without materialising the full projection.
    pub fn diff(&self, v: ArrayView1<'_, f32>, a: u32, b: u32) -> Result<f32> {
        let n = self.normalize(v)?;
        let ua = self.weights.unembed(a)?;
        let ub = self.weights.unembed(b)?;
        Ok(ua.dot(&n) - ub.dot(&n))
    }
}

/// `W_U sigma(v)`.
pub fn lens_project(
    v: ArrayView1<'_, f32>,
    weights: &ModelWeights,
    sigma: Sigma,
) -> Result<Array1<f32>> {
    Lens::new(weights, sigma).project(v)
}

/// `logits[a] - logits[b]`; positive favours `a`.
pub fn logit_diff(p: &LensProjection, a: u32, b: u32) -> Result<f32> {
    Ok(p.logit(a)? - p.logit(b)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub id: u32,
    pub text: String,
    pub logit: f32,
    /// Softmax over the projection's logits (the whole vocabulary unless the
    /// projection is restricted). For display only.
    pub prob: f64,
}

/// The `k` highest logits, descending, ties by ascending token id.
pub fn top_k_tokens(p: &LensProjection, k: usize, text: &dyn TokenText) -> Result<Vec<TokenScore>> {
    let n = p.logits.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "top-k needs 1 <= k <= {n}, got {k}"
        )));
    }
    let probs = softmax(p.logits.view());
    let cmp = |&i: &usize, &j: &usize| {
        p.logits[j]
            .total_cmp(&p.logits[i])
            .then_with(|| p.id_at(i).cmp(&p.id_at(j)))
    };
    let mut idx: Vec<usize> = (0..n).collect();
    if k < n {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    Ok(idx
        .into_iter()
        .map(|i| {
            let id = p.id_at(i);
            TokenScore {
                id,
                text: text.token_text(id),
                logit: p.logits[i],
                prob: probs[i],
            }
        })
        .collect())
}

/// Per-component logit differences of the final residual under a frozen
/// layer norm: every component is centred and divided by the final
/// residual's own scale, so the parts add up exactly to the direct
/// difference of the output logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenLnDecomposition {
    pub embedding: f64,
    /// `[layer][head]`, attention biases excluded.
    pub heads: Vec<Vec<f64>>,
    pub attn_bias: Vec<f64>,
    /// Whole MLP outputs per layer, biases included.
    pub mlp: Vec<f64>,
    /// Contribution of the learned final-LN bias (zero for plain LN).
    pub ln_bias: f64,
    /// Difference of the actual output logits.
    pub direct: f64,
}

impl FrozenLnDecomposition {
    pub fn total(&self) -> f64 {
        self.embedding
            + self.heads.iter().flatten().sum::<f64>()
            + self.attn_bias.iter().sum::<f64>()
            + self.mlp.iter().sum::<f64>()
            + self.ln_bias
    }
}

pub fn frozen_ln_decomposition(
    lens: &Lens<'_>,
    trace: &ActivationTrace,
    a: u32,
    b: u32,
) -> Result<FrozenLnDecomposition> {
    trace.require(CaptureLevel::FinalPosition)?;
    let w = lens.weights;
    let final_resid = trace.resid.last().ok_or(Error::EmptySequence)?;
    let (_, scale) = ln_stats(final_resid.view(), w.config.ln_eps);
    let u = &w.unembed(a)? - &w.unembed(b)?;
    let (gamma, beta) = match lens.sigma {
        Sigma::LearnedLn => (Some(w.ln_f.gamma.as_ref()), Some(w.ln_f.beta.as_ref())),
        Sigma::PlainLn => (None, None),
    };
    // u_eff_i = u_i * gamma_i / scale; diff(c) = sum_i u_eff_i * (c_i - mean c)
    let u_eff: Vec<f64> = (0..u.len())
        .map(|i| u[i] as f64 * gamma.map_or(1.0, |g| g[i] as f64) / scale as f64)
        .collect();
    let u_mean = u_eff.iter().sum::<f64>() / u_eff.len() as f64;
    let part = |c: ArrayView1<'_, f32>| -> f64 {
        // sum u_eff (c - mean c) = sum (u_eff - mean u_eff) c
        c.iter()
            .zip(&u_eff)
            .map(|(&ci, &ui)| (ui - u_mean) * ci as f64)
            .sum()
    };
    let heads = trace
        .head_out
        .iter()
        .map(|h| h.rows().into_iter().map(part).collect())
        .collect();
    let attn_bias = w.blocks.iter().map(|b| part(b.b_o.view())).collect();
    let mlp = trace.mlp_out.iter().map(|m| part(m.view())).collect();
    let ln_bias = beta.map_or(0.0, |bt| {
        u.iter().zip(bt).map(|(&x, &y)| x as f64 * y as f64).sum()
    });
    let direct = lens.diff(final_resid.view(), a, b)? as f64;
    Ok(FrozenLnDecomposition {
        embedding: part(trace.resid[0].view()),
        heads,
        attn_bias,
        mlp,
        ln_bias,
        direct,
    })
}
