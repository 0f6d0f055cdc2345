//! Interventions against the anchored bias: value-vector edits and
//! attention swaps, bundled into serializable plans.

use serde::{Deserialize, Serialize};

use crate::datasets::{McqSample, PromptView};
use crate::error::{Error, Result};
use crate::letter::{Letter, LetterSet};
use crate::model::{edit_delta, logits, Hook, ModelWeights, SwapMode};

pub const DEFAULT_LAMBDA1: f32 = 1.0;
pub const DEFAULT_LAMBDA2: f32 = 8.0;
pub const PLAN_SCHEMA_VERSION: u32 = 1;

/// An MLP value vector `v^{layer,dim}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Locus {
    pub layer: usize,
    pub dim: usize,
}

impl std::fmt::Display for Locus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.layer, self.dim)
    }
}

impl std::str::FromStr for Locus {
    type Err = Error;

    /// Accepts `L:N`, `L,N` or `(L, N)`.
    fn from_str(s: &str) -> Result<Locus> {
        let bad = || Error::InvalidArgument(format!("locus `{s}` is not of the form LAYER:DIM"));
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let (l, n) = inner.split_once([':', ',']).ok_or_else(bad)?;
        Ok(Locus {
            layer: l.trim().parse().map_err(|_| bad())?,
            dim: n.trim().parse().map_err(|_| bad())?,
        })
    }
}

/// An attention head `(layer, head)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeadRef {
    pub layer: usize,
    pub head: usize,
}

impl std::fmt::Display for HeadRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "L{}H{}", self.layer, self.head)
    }
}

impl std::str::FromStr for HeadRef {
    type Err = Error;

    /// Accepts `L8H1` or `8:1`.
    fn from_str(s: &str) -> Result<HeadRef> {
        let bad =
            || Error::InvalidArgument(format!("head `{s}` is not of the form L<layer>H<head>"));
        let t = s.trim();
        let (l, h) = if let Some(rest) = t.strip_prefix(['L', 'l']) {
            rest.split_once(['H', 'h']).ok_or_else(bad)?
        } else {
            t.split_once([':', ',']).ok_or_else(bad)?
        };
        Ok(HeadRef {
            layer: l.trim().parse().map_err(|_| bad())?,
            head: h.trim().parse().map_err(|_| bad())?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorEdit {
    pub layer: usize,
    pub dim: usize,
    pub lambda1: f32,
    pub lambda2: f32,
    pub anchor: u32,
    pub target: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionSwapEdit {
    pub layer: usize,
    pub head: usize,
    pub pos_anchor: usize,
    pub pos_target: usize,
    #[serde(default)]
    pub mode: SwapMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditPlan {
    pub schema_version: u32,
    #[serde(default)]
    pub vector_edits: Vec<VectorEdit>,
    #[serde(default)]
    pub attention_swaps: Vec<AttentionSwapEdit>,
}

impl Default for EditPlan {
    fn default() -> Self {
        EditPlan {
            schema_version: PLAN_SCHEMA_VERSION,
            vector_edits: Vec::new(),
            attention_swaps: Vec::new(),
        }
    }
}

impl EditPlan {
    pub fn is_empty(&self) -> bool {
        self.vector_edits.is_empty() && self.attention_swaps.is_empty()
    }

    pub fn extend(&mut self, other: EditPlan) {
        self.vector_edits.extend(other.vector_edits);
        self.attention_swaps.extend(other.attention_swaps);
    }

    pub fn from_json(text: &str) -> Result<EditPlan> {
        let plan: EditPlan = serde_json::from_str(text)?;
        if plan.schema_version != PLAN_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: plan.schema_version,
                expected: PLAN_SCHEMA_VERSION,
            });
        }
        Ok(plan)
    }

    /// Forward-pass hooks for this plan. Vector edits become per-pass
    /// patches, so the shared weights are never touched.
    pub fn hooks(&self, weights: &ModelWeights) -> Result<Vec<Hook>> {
        let mut hooks = Vec::with_capacity(self.vector_edits.len() + self.attention_swaps.len());
        for e in &self.vector_edits {
            hooks.push(Hook::value_edit(
                weights, e.layer, e.dim, e.anchor, e.target, e.lambda1, e.lambda2,
            )?);
        }
        for s in &self.attention_swaps {
            weights.check_head_index(s.layer, s.head)?;
            hooks.push(Hook::AttentionSwap {
                layer: s.layer,
                head: s.head,
                pos_a: s.pos_anchor,
                pos_b: s.pos_target,
                mode: s.mode,
            });
        }
        Ok(hooks)
    }

    /// Bakes the vector edits into a new set of weights. Attention swaps
    /// depend on prompt positions and cannot be made persistent.
    pub fn apply_persistent(&self, weights: &ModelWeights) -> Result<ModelWeights> {
        if !self.attention_swaps.is_empty() {
            return Err(Error::InvalidArgument(
                "attention swaps are per-prompt and cannot be applied persistently".into(),
            ));
        }
        let mut out = weights.clone();
        for e in &self.vector_edits {
            out = edit_value_vector(
                &out, e.layer, e.dim, e.anchor, e.target, e.lambda1, e.lambda2,
            )?;
        }
        Ok(out)
    }
}

/// New weights with `v^{l,n} <- v^{l,n} - lambda1 W_U[anchor] + lambda2 W_U[target]`.
/// Only `W_out` of layer `l` is copied.
pub fn edit_value_vector(
    weights: &ModelWeights,
    layer: usize,
    dim: usize,
    anchor: u32,
    target: u32,
    lambda1: f32,
    lambda2: f32,
) -> Result<ModelWeights> {
    let v = weights.value_vector(layer, dim)?;
    let delta = edit_delta(weights, anchor, target, lambda1, lambda2)?;
    let row = &v + &delta;
    weights.with_value_vector(layer, dim, row.view())
}

/// How the letter an edit steers towards is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetRule {
    /// The sample's gold letter.
    #[default]
    Gold,
    /// The non-A letter the unedited model scores highest. Reads only the
    /// prompt, never the label.
    GoldFree,
}

/// Non-A letter with the highest unedited logit; ties go to the lower token id.
pub fn gold_free_target(
    weights: &ModelWeights,
    view: PromptView<'_>,
    letters: &LetterSet,
) -> Result<Letter> {
    if view.arity() < 2 {
        return Err(Error::LetterPositions(format!(
            "{}: fewer than two choices",
            view.id
        )));
    }
    let out = logits(weights, view.tokens, &[])?;
    let mut best: Option<(Letter, f32, u32)> = None;
    for &l in &Letter::first(view.arity())[1..] {
        let id = letters.id(l);
        let x = out[id as usize];
        let better = match best {
            None => true,
            Some((_, bx, bid)) => x > bx || (x == bx && id < bid),
        };
        if better {
            best = Some((l, x, id));
        }
    }
    Ok(best.expect("at least one non-A letter").0)
}

pub fn target_letter(
    weights: &ModelWeights,
    sample: &McqSample,
    rule: TargetRule,
    letters: &LetterSet,
) -> Result<Letter> {
    match rule {
        TargetRule::Gold => {
            if sample.gold == Letter::A {
                return Err(Error::GoldIsAnchor(sample.id.clone()));
            }
            Ok(sample.gold)
        }
        TargetRule::GoldFree => gold_free_target(weights, sample.unlabeled(), letters),
    }
}

/// One edit per locus, all steering from `A` to `target`.
pub fn plan_edits(
    loci: &[Locus],
    target: Letter,
    letters: &LetterSet,
    lambda1: f32,
    lambda2: f32,
) -> Result<EditPlan> {
    if loci.is_empty() {
        return Err(Error::NoLoci);
    }
    if target == Letter::A {
        return Err(Error::SelfCancellingEdit(letters.anchor()));
    }
    Ok(EditPlan {
        vector_edits: loci
            .iter()
            .map(|l| VectorEdit {
                layer: l.layer,
                dim: l.dim,
                lambda1,
                lambda2,
                anchor: letters.anchor(),
                target: letters.id(target),
            })
            .collect(),
        ..EditPlan::default()
    })
}

#[allow(clippy::too_many_arguments)]
pub fn plan_edits_for_sample(
    weights: &ModelWeights,
    sample: &McqSample,
    loci: &[Locus],
    lambda1: f32,
    lambda2: f32,
    rule: TargetRule,
    letters: &LetterSet,
) -> Result<EditPlan> {
    if loci.is_empty() {
        return Err(Error::NoLoci);
    }
    let target = target_letter(weights, sample, rule, letters)?;
    plan_edits(loci, target, letters, lambda1, lambda2)
}

/// Swap between the `A` letter token and the `target` letter token of the
/// final choice block, at the last query position of head `head`.
pub fn plan_attention_swap(
    view: PromptView<'_>,
    head: HeadRef,
    target: Letter,
    mode: SwapMode,
) -> Result<EditPlan> {
    Ok(EditPlan {
        attention_swaps: vec![AttentionSwapEdit {
            layer: head.layer,
            head: head.head,
            pos_anchor: view.position_of(Letter::A)?,
            pos_target: view.position_of(target)?,
            mode,
        }],
        ..EditPlan::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::forward;
    use crate::model::CaptureLevel;
    use crate::tokenizer::Codec;
    use crate::toyforge::{build_toy, toy_samples, ToySpec};

    #[test]
    fn parse_loci_and_heads() {
        assert_eq!(
            "9:1853".parse::<Locus>().unwrap(),
            Locus {
                layer: 9,
                dim: 1853
            }
        );
        assert_eq!(
            "(9, 1853)".parse::<Locus>().unwrap(),
            Locus {
                layer: 9,
                dim: 1853
            }
        );
        assert!("9-1853".parse::<Locus>().is_err());
        assert_eq!(
            "L8H1".parse::<HeadRef>().unwrap(),
            HeadRef { layer: 8, head: 1 }
        );
        assert_eq!(
            "10:8".parse::<HeadRef>().unwrap(),
            HeadRef { layer: 10, head: 8 }
        );
        assert_eq!(HeadRef { layer: 8, head: 1 }.to_string(), "L8H1");
    }

    #[test]
    fn zero_lambdas_leave_weights_bit_identical() {
        let toy = build_toy(&ToySpec::default()).unwrap();
        let edited = edit_value_vector(&toy.weights, 2, 5, 0, 1, 0.0, 0.0).unwrap();
        assert_eq!(edited, toy.weights);
    }

    #[test]
    fn self_cancelling_and_out_of_range_edits_fail() {
        let toy = build_toy(&ToySpec::default()).unwrap();
        assert!(matches!(
            edit_value_vector(&toy.weights, 0, 0, 3, 3, 1.0, 8.0),
            Err(Error::SelfCancellingEdit(3))
        ));
        assert!(edit_value_vector(&toy.weights, 3, 0, 0, 1, 1.0, 8.0).is_err());
        assert!(edit_value_vector(&toy.weights, 0, 4 * 32, 0, 1, 1.0, 8.0).is_err());
        assert!(edit_value_vector(&toy.weights, 0, 0, 0, 1, -1.0, 8.0).is_err());
    }

    #[test]
    fn hook_and_persistent_edit_agree() {
        let toy = build_toy(&ToySpec::default()).unwrap();
        let letters = toy.vocab.letter_set(true).unwrap();
        let loci = [Locus { layer: 2, dim: 5 }, Locus { layer: 0, dim: 17 }];
        let plan = plan_edits(&loci, Letter::C, &letters, 1.0, 8.0).unwrap();
        assert_eq!(plan.vector_edits.len(), 2);
        let baked = plan.apply_persistent(&toy.weights).unwrap();
        let hooks = plan.hooks(&toy.weights).unwrap();
        for s in toy_samples(5, 4, 2).unwrap() {
            let a = logits(&baked, &s.tokens, &[]).unwrap();
            let b = logits(&toy.weights, &s.tokens, &hooks).unwrap();
            let gap = (&a - &b).mapv(f32::abs).fold(0.0f32, |m, &x| m.max(x));
            assert!(gap < 1e-4, "{gap}");
        }
    }

    #[test]
    fn edit_leaves_earlier_layers_untouched() {
        let toy = build_toy(&ToySpec::default()).unwrap();
        let s = &toy_samples(1, 3, 4).unwrap()[0];
        let edited = edit_value_vector(&toy.weights, 2, 5, 0, 2, 1.0, 8.0).unwrap();
        let (_, t0) = forward(&toy.weights, &s.tokens, CaptureLevel::FinalPosition, &[]).unwrap();
        let (_, t1) = forward(&edited, &s.tokens, CaptureLevel::FinalPosition, &[]).unwrap();
        for l in 0..=2 {
            assert_eq!(t0.resid[l], t1.resid[l]);
        }
        assert_eq!(t0.attn_out[2], t1.attn_out[2]);
        assert_ne!(t0.mlp_out[2], t1.mlp_out[2]);
    }

    #[test]
    fn gold_rule_refuses_anchor_gold_and_gold_free_reads_prompt() {
        let toy = build_toy(&ToySpec::default()).unwrap();
        let letters = toy.vocab.letter_set(true).unwrap();
        let mut s = toy_samples(1, 4, 9).unwrap().remove(0);
        let free = target_letter(&toy.weights, &s, TargetRule::GoldFree, &letters).unwrap();
        assert_ne!(free, Letter::A);
        s.gold = Letter::A;
        assert!(matches!(
            target_letter(&toy.weights, &s, TargetRule::Gold, &letters),
            Err(Error::GoldIsAnchor(_))
        ));
        // the label plays no part in the gold-free choice
        assert_eq!(
            target_letter(&toy.weights, &s, TargetRule::GoldFree, &letters).unwrap(),
            free
        );
    }

    #[test]
    fn swap_plan_uses_letter_positions() {
        let s = toy_samples(1, 3, 1).unwrap().remove(0);
        let plan = plan_attention_swap(
            s.unlabeled(),
            HeadRef { layer: 1, head: 0 },
            Letter::C,
            SwapMode::Pattern,
        )
        .unwrap();
        let sw = plan.attention_swaps[0];
        assert_eq!(
            (sw.pos_anchor, sw.pos_target),
            (s.letter_positions[0], s.letter_positions[2])
        );
        assert!(plan_attention_swap(
            s.unlabeled(),
            HeadRef { layer: 1, head: 0 },
            Letter::E,
            SwapMode::Pattern
        )
        .is_err());
        assert!(plan
            .apply_persistent(&build_toy(&ToySpec::default()).unwrap().weights)
            .is_err());
    }

    #[test]
    fn plan_json_round_trip_and_version_check() {
        let plan = EditPlan {
            vector_edits: vec![VectorEdit {
                layer: 9,
                dim: 1853,
                lambda1: 1.0,
                lambda2: 8.0,
                anchor: 317,
                target: 347,
            }],
            ..EditPlan::default()
        };
        let text = serde_json::to_string(&plan).unwrap();
        assert_eq!(EditPlan::from_json(&text).unwrap(), plan);
        let old = text.replace("\"schema_version\":1", "\"schema_version\":0");
        assert!(matches!(
            EditPlan::from_json(&old),
            Err(Error::SchemaVersion { .. })
        ));
        assert!(matches!(
            plan_edits(
                &[],
                Letter::B,
                &LetterSet {
                    ids: [1, 2, 3, 4, 5],
                    leading_space: true
                },
                1.0,
                8.0
            ),
            Err(Error::NoLoci)
        ));
    }
}
