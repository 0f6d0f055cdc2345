//! Tiny deterministic transformers with planted bias components.
//!
//! A toy lives in an orthonormal basis `e_0 .. e_{d-1}` drawn from a seeded
//! Gaussian and orthogonalised starting from the all-ones direction, so
//! `e_0 ∝ 1` and every other basis vector is mean-free (layer norm's
//! centering leaves it alone). Token `t` embeds as `c * e_{1+t}` and the
//! unembedding is tied, so token directions are exactly separable.
//!
//! Every randomly initialised matrix that writes into the residual stream is
//! projected off the answer-letter directions. Only the planted components
//! touch them:
//!
//! * an MLP dimension whose coefficient is the constant `gelu(3)` and whose
//!   value vector is `M (cos θ e_A + sin θ e_s1)`, with θ chosen so that the
//!   lens difference `A - other letter` of `k v` equals the requested strength;
//! * an attention head whose final query (on `" Answer:"`) looks for the
//!   `" A"` key and copies its `e_A` component into `cos φ e_A + sin φ e_s2`.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::datasets::{build_sample, McqSample};
use crate::error::{Error, Result};
use crate::letter::{Letter, LetterSet, TokenText};
use crate::model::ops::gelu;
use crate::model::{Block, LayerNormParams, ModelConfig, ModelWeights};
use crate::tokenizer::Codec;

pub const TOY_TOKENS: [&str; 20] = [
    " A",
    " B",
    " C",
    " D",
    " E",
    ":",
    "Question:",
    " Answer",
    " Choices:",
    " Answer:",
    " red",
    " blue",
    " green",
    " cat",
    " dog",
    " fish",
    " sun",
    " moon",
    " tree",
    " rock",
];
const ANSWER: u32 = 9;
const COLON: u32 = 5;
const FILLER: std::ops::Range<u32> = 10..20;
const PLANTED_PRE_ACTIVATION: f32 = 3.0;

/// Symbolic vocabulary shared by all toys.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyVocab;

impl ToyVocab {
    pub fn size(&self) -> usize {
        TOY_TOKENS.len()
    }

    fn lookup(piece: &str) -> Option<u32> {
        TOY_TOKENS
            .iter()
            .position(|&t| t == piece)
            .map(|i| i as u32)
    }

    fn filler(word: &str) -> u32 {
        let mut h = DefaultHasher::new();
        word.hash(&mut h);
        FILLER.start + (h.finish() % (FILLER.end - FILLER.start) as u64) as u32
    }

    pub fn filler_words() -> impl Iterator<Item = &'static str> {
        FILLER.map(|i| TOY_TOKENS[i as usize].trim_start())
    }
}

impl TokenText for ToyVocab {
    fn token_text(&self, id: u32) -> String {
        TOY_TOKENS
            .get(id as usize)
            .map_or_else(|| format!("<{id}>"), |s| s.to_string())
    }
}

impl Codec for ToyVocab {
    /// Whitespace-delimited words map to their vocabulary entry (with the
    /// preceding space attached), `X:` splits into `X` and `:`, and unknown
    /// words hash onto the filler tokens. Lossy by design.
    fn encode(&self, text: &str) -> Vec<u32> {
        let mut ids = Vec::new();
        let mut prev_space = false;
        let mut word = String::new();
        let flush = |word: &mut String, spaced: bool, ids: &mut Vec<u32>| {
            if word.is_empty() {
                return;
            }
            let piece = if spaced {
                format!(" {word}")
            } else {
                word.clone()
            };
            if let Some(id) = Self::lookup(&piece).or_else(|| Self::lookup(word)) {
                ids.push(id);
            } else if let Some(stem) = piece
                .strip_suffix(':')
                .filter(|s| Self::lookup(s).is_some())
            {
                ids.push(Self::lookup(stem).expect("checked"));
                ids.push(COLON);
            } else {
                ids.push(Self::filler(word));
            }
            word.clear();
        };
        let mut spaced = false;
        for ch in text.chars() {
            if ch.is_whitespace() {
                flush(&mut word, spaced, &mut ids);
                prev_space = true;
            } else {
                if word.is_empty() {
                    spaced = prev_space;
                }
                word.push(ch);
                prev_space = false;
            }
        }
        flush(&mut word, spaced, &mut ids);
        ids
    }

    fn vocab_size(&self) -> usize {
        TOY_TOKENS.len()
    }

    fn letter_set(&self, leading_space: bool) -> Result<LetterSet> {
        if !leading_space {
            return Err(Error::Tokenizer(
                "toy vocabulary only has leading-space letters".into(),
            ));
        }
        Ok(LetterSet {
            ids: [0, 1, 2, 3, 4],
            leading_space: true,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedMlp {
    pub layer: usize,
    pub dim: usize,
    /// Lens difference `A - other letter` of the planted `k v`.
    pub strength: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedHead {
    pub layer: usize,
    pub head: usize,
    /// Approximate lens difference of the head output (exact up to the
    /// layer-norm epsilon).
    pub strength: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToySpec {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub n_ctx: usize,
    pub planted_mlp: Option<PlantedMlp>,
    pub planted_head: Option<PlantedHead>,
    /// Norm of the token embeddings (`c`).
    pub embed_scale: f32,
    /// Norm of the planted value vector (`M`).
    pub value_norm: f32,
    /// Norm of the planted head's output row.
    pub head_norm: f32,
    /// Standard deviation of the random weights.
    pub noise: f32,
    /// Perturbs the in-block layer norms away from identity. Zero keeps the
    /// planted head analytic.
    pub ln_noise: f32,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            n_layers: 3,
            n_heads: 2,
            d_model: 32,
            n_ctx: 128,
            planted_mlp: Some(PlantedMlp {
                layer: 2,
                dim: 5,
                strength: 5.0,
            }),
            planted_head: Some(PlantedHead {
                layer: 1,
                head: 1,
                strength: 6.0,
            }),
            embed_scale: 3.0,
            value_norm: 3.0,
            head_norm: 2.0,
            noise: 0.1,
            ln_noise: 0.0,
            seed: 0,
        }
    }
}

impl ToySpec {
    /// Smallest model width that fits the vocabulary, the mean direction and
    /// two spare directions.
    pub const MIN_D_MODEL: usize = TOY_TOKENS.len() + 3;

    /// A seeded random architecture with one planted MLP locus and one
    /// planted head.
    pub fn random(seed: u64) -> ToySpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7079_5f73_7065_6300);
        let n_layers = rng.gen_range(1..=4);
        let n_heads = rng.gen_range(1..=4);
        let widths: Vec<usize> = [24usize, 32, 48, 64]
            .into_iter()
            .filter(|d| d % n_heads == 0)
            .collect();
        let d_model = *widths.choose(&mut rng).expect("24 and 48 divide by 1..=4");
        let mlp = PlantedMlp {
            layer: rng.gen_range(0..n_layers),
            dim: rng.gen_range(0..4 * d_model),
            strength: rng.gen_range(5.0..8.0),
        };
        let head = PlantedHead {
            layer: rng.gen_range(0..n_layers),
            head: rng.gen_range(0..n_heads),
            strength: rng.gen_range(6.0..9.0),
        };
        ToySpec {
            n_layers,
            n_heads,
            d_model,
            planted_mlp: Some(mlp),
            planted_head: Some(head),
            seed,
            ..ToySpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ToySpec(m));
        if !(1..=4).contains(&self.n_layers) || !(1..=4).contains(&self.n_heads) {
            return bad(format!(
                "need 1..=4 layers and heads, got {} and {}",
                self.n_layers, self.n_heads
            ));
        }
        if !(8..=64).contains(&self.d_model) || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} must be in 8..=64 and divisible by {} heads",
                self.d_model, self.n_heads
            ));
        }
        if self.d_model < Self::MIN_D_MODEL {
            return bad(format!(
                "d_model {} too small: {} token directions plus mean and two spares need {}",
                self.d_model,
                TOY_TOKENS.len(),
                Self::MIN_D_MODEL
            ));
        }
        for (name, v) in [
            ("embed_scale", self.embed_scale),
            ("value_norm", self.value_norm),
            ("head_norm", self.head_norm),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(self.noise.is_finite()
            && self.noise >= 0.0
            && self.ln_noise.is_finite()
            && self.ln_noise >= 0.0)
        {
            return bad("noise levels must be finite and non-negative".into());
        }
        if let Some(p) = self.planted_mlp {
            if p.layer >= self.n_layers || p.dim >= 4 * self.d_model {
                return bad(format!("planted MLP ({}, {}) out of range", p.layer, p.dim));
            }
            let max = self.max_strength(gelu(PLANTED_PRE_ACTIVATION) * self.value_norm);
            if !(p.strength >= 0.0 && p.strength <= max) {
                return bad(format!(
                    "planted MLP strength {} outside [0, {max:.3}]",
                    p.strength
                ));
            }
        }
        if let Some(p) = self.planted_head {
            if p.layer >= self.n_layers || p.head >= self.n_heads {
                return bad(format!("planted head L{}H{} out of range", p.layer, p.head));
            }
            let max = self.embed_scale * (self.d_model as f32).sqrt();
            if !(p.strength >= 0.0 && p.strength < max) {
                return bad(format!(
                    "planted head strength {} outside [0, {max:.3})",
                    p.strength
                ));
            }
        }
        Ok(())
    }

    /// Largest lens difference a vector of norm `norm` can reach.
    fn max_strength(&self, norm: f32) -> f32 {
        self.embed_scale * norm / self.ln_scale(norm)
    }

    /// Layer-norm denominator of a mean-free vector of the given norm.
    fn ln_scale(&self, norm: f32) -> f32 {
        (norm * norm / self.d_model as f32 + 1e-5).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpTruth {
    pub layer: usize,
    pub dim: usize,
    /// The constant coefficient `k` of the planted dimension.
    pub coefficient: f32,
    /// Closed-form lens difference of `k v`.
    pub lens_diff: f32,
    /// `λ1` that removes the planted letter component exactly (with `λ2 = 0`).
    pub cancel_lambda1: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub mlp: Option<MlpTruth>,
    pub head: Option<PlantedHead>,
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    pub spec: ToySpec,
    pub weights: ModelWeights,
    pub truth: GroundTruth,
    pub vocab: ToyVocab,
}

struct Basis {
    e: Array2<f32>,
}

impl Basis {
    fn new(d: usize, rng: &mut ChaCha8Rng) -> Basis {
        let mut vecs: Vec<Array1<f64>> = Vec::with_capacity(d);
        let mut candidate = Array1::from_elem(d, 1.0f64);
        while vecs.len() < d {
            for b in &vecs {
                let p = candidate.dot(b);
                candidate.scaled_add(-p, b);
            }
            // second pass for numerical orthogonality
            for b in &vecs {
                let p = candidate.dot(b);
                candidate.scaled_add(-p, b);
            }
            let n = candidate.dot(&candidate).sqrt();
            if n > 1e-6 {
                vecs.push(candidate / n);
            }
            candidate = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
        }
        let mut e = Array2::zeros((d, d));
        for (i, v) in vecs.iter().enumerate() {
            e.row_mut(i).assign(&v.mapv(|x| x as f32));
        }
        Basis { e }
    }

    fn token(&self, t: usize) -> Array1<f32> {
        self.e.row(1 + t).to_owned()
    }

    fn spare(&self, i: usize) -> Array1<f32> {
        self.e.row(1 + TOY_TOKENS.len() + i).to_owned()
    }

    /// Removes the components along the five letter directions.
    fn strip_letters(&self, mut v: ndarray::ArrayViewMut1<'_, f32>) {
        for t in 0..5 {
            let dir = self.e.row(1 + t);
            let p = v.dot(&dir);
            v.scaled_add(-p, &dir);
        }
    }

    fn strip_rows(&self, m: &mut Array2<f32>) {
        for row in m.rows_mut() {
            self.strip_letters(row);
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, shape: (usize, usize), std: f32) -> Array2<f32> {
    Array2::from_shape_fn(shape, |_| std * rng.sample::<f32, _>(StandardNormal))
}

fn gaussian1(rng: &mut ChaCha8Rng, n: usize, std: f32) -> Array1<f32> {
    Array1::from_shape_fn(n, |_| std * rng.sample::<f32, _>(StandardNormal))
}

pub fn build_toy(spec: &ToySpec) -> Result<ToyModel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let v = TOY_TOKENS.len();
    let d = spec.d_model;
    let dh = d / spec.n_heads;
    let config = ModelConfig::custom(spec.n_layers, spec.n_heads, d, v, spec.n_ctx)?;
    let basis = Basis::new(d, &mut rng);
    let c = spec.embed_scale;
    let a_dir = basis.token(0);

    let mut wte = Array2::zeros((v, d));
    for t in 0..v {
        wte.row_mut(t).assign(&(basis.token(t) * c));
    }
    let mut wpe = gaussian(&mut rng, (spec.n_ctx, d), spec.noise);
    basis.strip_rows(&mut wpe);

    let ln = |rng: &mut ChaCha8Rng| -> LayerNormParams {
        if spec.ln_noise == 0.0 {
            return LayerNormParams::identity(d);
        }
        LayerNormParams {
            gamma: Arc::new(gaussian1(rng, d, spec.ln_noise) + 1.0),
            beta: Arc::new(gaussian1(rng, d, spec.ln_noise)),
        }
    };

    let mut blocks = Vec::with_capacity(spec.n_layers);
    for l in 0..spec.n_layers {
        let ln1 = ln(&mut rng);
        let mut w_qkv = gaussian(&mut rng, (d, 3 * d), spec.noise);
        let mut b_qkv = gaussian1(&mut rng, 3 * d, spec.noise);
        let mut w_o = gaussian(&mut rng, (d, d), spec.noise);
        let mut b_o = gaussian1(&mut rng, d, spec.noise);
        let ln2 = ln(&mut rng);
        let mut w_in = gaussian(&mut rng, (d, 4 * d), spec.noise);
        let mut b_in = gaussian1(&mut rng, 4 * d, spec.noise);
        let mut w_out = gaussian(&mut rng, (4 * d, d), spec.noise);
        let mut b_out = gaussian1(&mut rng, d, spec.noise);
        basis.strip_rows(&mut w_o);
        basis.strip_rows(&mut w_out);
        basis.strip_letters(b_o.view_mut());
        basis.strip_letters(b_out.view_mut());

        if let Some(p) = spec.planted_head.filter(|p| p.layer == l) {
            let (q0, k0, v0) = (p.head * dh, d + p.head * dh, 2 * d + p.head * dh);
            for col in 0..dh {
                for base in [q0, k0, v0] {
                    w_qkv.column_mut(base + col).fill(0.0);
                    b_qkv[base + col] = 0.0;
                }
            }
            let focus = 1.5;
            w_qkv
                .column_mut(q0)
                .assign(&(basis.token(ANSWER as usize) * focus));
            w_qkv.column_mut(k0).assign(&(&a_dir * focus));
            w_qkv.column_mut(v0).assign(&a_dir);
            let cos = (p.strength / (c * (d as f32).sqrt())).min(1.0);
            let sin = (1.0 - cos * cos).max(0.0).sqrt();
            let row = (&a_dir * cos + basis.spare(1) * sin) * spec.head_norm;
            w_o.row_mut(p.head * dh).assign(&row);
        }

        if let Some(p) = spec.planted_mlp.filter(|p| p.layer == l) {
            w_in.column_mut(p.dim).fill(0.0);
            b_in[p.dim] = PLANTED_PRE_ACTIVATION;
            let k = gelu(PLANTED_PRE_ACTIVATION);
            let norm = k * spec.value_norm;
            let cos = (p.strength * spec.ln_scale(norm) / (c * norm)).min(1.0);
            let sin = (1.0 - cos * cos).max(0.0).sqrt();
            let row = (&a_dir * cos + basis.spare(0) * sin) * spec.value_norm;
            w_out.row_mut(p.dim).assign(&row);
        }

        blocks.push(Block {
            ln1,
            w_qkv: Arc::new(w_qkv),
            b_qkv: Arc::new(b_qkv),
            w_o: Arc::new(w_o),
            b_o: Arc::new(b_o),
            ln2,
            w_in: Arc::new(w_in),
            b_in: Arc::new(b_in),
            w_out: Arc::new(w_out),
            b_out: Arc::new(b_out),
        });
    }

    let weights = ModelWeights {
        config,
        wte: Arc::new(wte),
        wpe: Arc::new(wpe),
        blocks,
        ln_f: LayerNormParams::identity(d),
    };
    weights.validate()?;

    let mlp = spec.planted_mlp.map(|p| {
        let k = gelu(PLANTED_PRE_ACTIVATION);
        let row = weights.blocks[p.layer].w_out.row(p.dim);
        let along_a = row.dot(&a_dir);
        let norm = k * row.dot(&row).sqrt();
        MlpTruth {
            layer: p.layer,
            dim: p.dim,
            coefficient: k,
            lens_diff: c * k * along_a / spec.ln_scale(norm),
            cancel_lambda1: along_a / c,
        }
    });
    Ok(ToyModel {
        spec: spec.clone(),
        weights,
        truth: GroundTruth {
            mlp,
            head: spec.planted_head,
        },
        vocab: ToyVocab,
    })
}

/// MCQ prompts over the toy vocabulary with the gold letter drawn uniformly
/// from the non-A letters.
pub fn toy_samples(count: usize, arity: usize, seed: u64) -> Result<Vec<McqSample>> {
    if !(2..=5).contains(&arity) {
        return Err(Error::InvalidArgument(format!(
            "arity {arity} outside 2..=5"
        )));
    }
    let words: Vec<&str> = ToyVocab::filler_words().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let mut pick = |n: usize| -> String {
                (0..n)
                    .map(|_| *words.choose(&mut rng).expect("non-empty"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let question = pick(3);
            let choices: Vec<String> = (0..arity).map(|_| pick(1)).collect();
            let gold = Letter::from_index(rng.gen_range(1..arity))?;
            build_sample(
                &ToyVocab,
                &format!("toy-{i}"),
                "toy",
                &question,
                &choices,
                gold,
                &[],
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal_and_starts_at_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = Basis::new(24, &mut rng);
        let g = b.e.dot(&b.e.t());
        for i in 0..24 {
            for j in 0..24 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - want).abs() < 1e-5);
            }
        }
        let first = b.e.row(0);
        assert!(first.iter().all(|&x| (x - first[0]).abs() < 1e-6));
    }

    #[test]
    fn too_narrow_is_rejected() {
        let spec = ToySpec {
            d_model: 16,
            ..ToySpec::default()
        };
        assert!(matches!(build_toy(&spec), Err(Error::ToySpec(_))));
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = ToySpec::random(11);
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ToySpec>(&text).unwrap(), spec);
        spec.validate().unwrap();
    }

    #[test]
    fn toy_codec_splits_letters_and_colons() {
        let ids = ToyVocab.encode("Question: red cat Answer Choices: A: dog B: sun Answer:");
        assert_eq!(ids, vec![6, 10, 13, 7, 8, 0, 5, 14, 1, 5, 16, 9]);
    }

    #[test]
    fn closed_form_matches_requested_strength() {
        let toy = build_toy(&ToySpec::default()).unwrap();
        let t = toy.truth.mlp.unwrap();
        assert!((t.lens_diff - 5.0).abs() < 1e-4);
    }
}
