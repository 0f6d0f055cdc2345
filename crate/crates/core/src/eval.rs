//! Anchored-bias rates, accuracy under interventions, few-shot prompting and
//! damage checks on the original task formulations.

use std::collections::HashSet;
use std::fmt;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::{
    with_exemplars, Exemplar, McqSample, OriginalSample, OriginalTask, PromptView,
};
use crate::error::{Error, Result};
use crate::letter::{Letter, LetterSet};
use crate::mitigation::{
    plan_attention_swap, plan_edits, target_letter, HeadRef, Locus, TargetRule,
};
use crate::model::ops::{argmax, softmax};
use crate::model::{logits, Hook, ModelWeights, SwapMode};
use crate::par::{self, Execution};
use crate::tokenizer::Codec;

pub const RESULT_SCHEMA_VERSION: u32 = 1;

/// Where the predicted answer is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArgmaxDomain {
    /// Argmax over the sample's letter tokens only.
    #[default]
    Letters,
    /// Argmax over the whole vocabulary.
    Vocab,
}

impl std::str::FromStr for ArgmaxDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "letters" | "letters-only" => Ok(ArgmaxDomain::Letters),
            "vocab" | "full-vocab" => Ok(ArgmaxDomain::Vocab),
            other => Err(Error::InvalidArgument(format!(
                "unknown argmax domain `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prediction {
    Letter(Letter),
    /// A non-letter token won the full-vocabulary argmax.
    Other(u32),
}

/// Reads a prediction from final logits. Letter ties go to the lower token id.
pub fn predict(
    logits: &Array1<f32>,
    letters: &LetterSet,
    arity: usize,
    domain: ArgmaxDomain,
) -> Prediction {
    match domain {
        ArgmaxDomain::Letters => {
            let mut best = (Letter::A, f32::NEG_INFINITY, u32::MAX);
            for &l in Letter::first(arity) {
                let id = letters.id(l);
                let x = logits[id as usize];
                if x > best.1 || (x == best.1 && id < best.2) {
                    best = (l, x, id);
                }
            }
            Prediction::Letter(best.0)
        }
        ArgmaxDomain::Vocab => {
            let id = argmax(logits.view()) as u32;
            match letters.letter_of(id) {
                Some(l) if l.index() < arity => Prediction::Letter(l),
                _ => Prediction::Other(id),
            }
        }
    }
}

pub fn classify(
    weights: &ModelWeights,
    view: PromptView<'_>,
    letters: &LetterSet,
    hooks: &[Hook],
    domain: ArgmaxDomain,
) -> Result<Prediction> {
    let out = logits(weights, view.tokens, hooks)?;
    Ok(predict(&out, letters, view.arity(), domain))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    /// Samples used for localization; plans may read gold labels.
    Infer,
    /// Held-out samples; plans are built without gold labels.
    Eva,
    #[default]
    All,
}

impl Split {
    pub fn target_rule(self) -> TargetRule {
        match self {
            Split::Eva => TargetRule::GoldFree,
            Split::Infer | Split::All => TargetRule::Gold,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Infer => "infer",
            Split::Eva => "eva",
            Split::All => "all",
        })
    }
}

/// An intervention applied to every sample of an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Condition {
    Baseline,
    Edited {
        loci: Vec<Locus>,
        lambda1: f32,
        lambda2: f32,
    },
    Swapped {
        heads: Vec<HeadRef>,
        mode: SwapMode,
    },
    KShot {
        k: usize,
    },
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Baseline => f.write_str("baseline"),
            Condition::Edited {
                loci,
                lambda1,
                lambda2,
            } => {
                let l: Vec<String> = loci
                    .iter()
                    .map(|l| format!("{}:{}", l.layer, l.dim))
                    .collect();
                write!(f, "edit[{}] l1={lambda1} l2={lambda2}", l.join(" "))
            }
            Condition::Swapped { heads, mode } => {
                let h: Vec<String> = heads.iter().map(ToString::to_string).collect();
                let m = match mode {
                    SwapMode::Pattern => "swap",
                    SwapMode::Literal => "swap-literal",
                };
                write!(f, "{m}[{}]", h.join(" "))
            }
            Condition::KShot { k } => write!(f, "{k}-shot"),
        }
    }
}

/// Counts behind an [`EvalResult`]. Merging is associative and commutative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub total: usize,
    pub correct: usize,
    pub anchored: usize,
    /// Predicted a letter that is neither A nor gold.
    pub other_letter: usize,
    /// Predicted a non-letter token (full-vocabulary domain only).
    pub non_letter: usize,
}

impl Tally {
    pub fn record(&mut self, pred: Prediction, gold: Letter) {
        self.total += 1;
        match pred {
            Prediction::Letter(l) if l == gold => self.correct += 1,
            Prediction::Letter(Letter::A) => self.anchored += 1,
            Prediction::Letter(_) => self.other_letter += 1,
            Prediction::Other(_) => self.non_letter += 1,
        }
    }

    pub fn merge(self, o: Tally) -> Tally {
        Tally {
            total: self.total + o.total,
            correct: self.correct + o.correct,
            anchored: self.anchored + o.anchored,
            other_letter: self.other_letter + o.other_letter,
            non_letter: self.non_letter + o.non_letter,
        }
    }

    fn pct(&self, n: usize) -> f64 {
        100.0 * n as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub schema_version: u32,
    pub dataset: String,
    pub model: String,
    pub condition: Condition,
    pub split: Split,
    pub domain: ArgmaxDomain,
    pub samples: usize,
    pub anchored_rate: f64,
    pub accuracy: f64,
    pub other_rate: f64,
    pub tally: Tally,
}

impl EvalResult {
    pub fn from_tally(
        meta: &EvalMeta,
        condition: Condition,
        split: Split,
        domain: ArgmaxDomain,
        tally: Tally,
    ) -> Result<Self> {
        if tally.total == 0 {
            return Err(Error::EmptySamples);
        }
        Ok(EvalResult {
            schema_version: RESULT_SCHEMA_VERSION,
            dataset: meta.dataset.clone(),
            model: meta.model.clone(),
            condition,
            split,
            domain,
            samples: tally.total,
            anchored_rate: tally.pct(tally.anchored),
            accuracy: tally.pct(tally.correct),
            other_rate: tally.pct(tally.other_letter + tally.non_letter),
            tally,
        })
    }
}

/// Labels attached to results.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EvalMeta {
    pub dataset: String,
    pub model: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    pub domain: ArgmaxDomain,
    pub exec: Execution,
}

fn non_empty<T>(xs: &[T]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(())
}

fn tally_over<F>(samples: &[McqSample], exec: Execution, f: F) -> Result<Tally>
where
    F: Fn(&McqSample) -> Result<Prediction> + Sync + Send,
{
    let preds = par::try_map(samples, exec, |s| Ok::<_, Error>((f(s)?, s.gold)))?;
    Ok(preds.into_iter().fold(Tally::default(), |mut t, (p, g)| {
        t.record(p, g);
        t
    }))
}

/// Percentage of samples whose prediction is `A`. Samples must have gold != A.
pub fn anchored_rate(
    weights: &ModelWeights,
    samples: &[McqSample],
    letters: &LetterSet,
    opts: EvalOptions,
) -> Result<f64> {
    non_empty(samples)?;
    if let Some(s) = samples.iter().find(|s| s.gold == Letter::A) {
        return Err(Error::GoldIsAnchor(s.id.clone()));
    }
    let t = tally_over(samples, opts.exec, |s| {
        classify(weights, s.unlabeled(), letters, &[], opts.domain)
    })?;
    Ok(t.pct(t.anchored))
}

/// The intervention an accuracy run applies per sample.
#[derive(Debug, Clone, PartialEq)]
pub enum Mitigation {
    None,
    Edit {
        loci: Vec<Locus>,
        lambda1: f32,
        lambda2: f32,
    },
    Swap {
        heads: Vec<HeadRef>,
        mode: SwapMode,
    },
}

impl Mitigation {
    pub fn condition(&self) -> Condition {
        match self {
            Mitigation::None => Condition::Baseline,
            Mitigation::Edit {
                loci,
                lambda1,
                lambda2,
            } => Condition::Edited {
                loci: loci.clone(),
                lambda1: *lambda1,
                lambda2: *lambda2,
            },
            Mitigation::Swap { heads, mode } => Condition::Swapped {
                heads: heads.clone(),
                mode: *mode,
            },
        }
    }

    /// Hooks for one sample. The target letter comes from the gold label for
    /// `TargetRule::Gold` and from the unlabeled prompt otherwise.
    pub fn hooks_for(
        &self,
        weights: &ModelWeights,
        sample: &McqSample,
        rule: TargetRule,
        letters: &LetterSet,
    ) -> Result<Vec<Hook>> {
        let plan = match self {
            Mitigation::None => return Ok(Vec::new()),
            Mitigation::Edit {
                loci,
                lambda1,
                lambda2,
            } => {
                let target = target_letter(weights, sample, rule, letters)?;
                plan_edits(loci, target, letters, *lambda1, *lambda2)?
            }
            Mitigation::Swap { heads, mode } => {
                if heads.is_empty() {
                    return Err(Error::InvalidArgument(
                        "swap mitigation needs at least one head".into(),
                    ));
                }
                let target = target_letter(weights, sample, rule, letters)?;
                let mut plan = plan_attention_swap(sample.unlabeled(), heads[0], target, *mode)?;
                for &h in &heads[1..] {
                    plan.extend(plan_attention_swap(sample.unlabeled(), h, target, *mode)?);
                }
                plan
            }
        };
        plan.hooks(weights)
    }
}

/// Top-1 accuracy with `mitigation` applied per sample. Infer runs steer
/// towards the gold letter; Eva runs pick the target without the label.
pub fn accuracy(
    weights: &ModelWeights,
    samples: &[McqSample],
    letters: &LetterSet,
    mitigation: &Mitigation,
    split: Split,
    opts: EvalOptions,
    meta: &EvalMeta,
) -> Result<EvalResult> {
    non_empty(samples)?;
    let rule = split.target_rule();
    let t = tally_over(samples, opts.exec, |s| {
        let hooks = mitigation.hooks_for(weights, s, rule, letters)?;
        classify(weights, s.unlabeled(), letters, &hooks, opts.domain)
    })?;
    EvalResult::from_tally(meta, mitigation.condition(), split, opts.domain, t)
}

/// Accuracy of the value-vector edit at each `lambda2`.
#[allow(clippy::too_many_arguments)]
pub fn lambda_sweep(
    weights: &ModelWeights,
    loci: &[Locus],
    samples: &[McqSample],
    letters: &LetterSet,
    lambda1: f32,
    lambda2s: &[f32],
    split: Split,
    opts: EvalOptions,
    meta: &EvalMeta,
) -> Result<Vec<EvalResult>> {
    lambda2s
        .iter()
        .map(|&lambda2| {
            let m = Mitigation::Edit {
                loci: loci.to_vec(),
                lambda1,
                lambda2,
            };
            accuracy(weights, samples, letters, &m, split, opts, meta)
        })
        .collect()
}

/// Whether the model solves one original-format prompt.
pub fn original_correct(weights: &ModelWeights, sample: &OriginalSample) -> Result<bool> {
    let out = logits(weights, &sample.tokens, &[])?;
    match &sample.task {
        OriginalTask::Ioi {
            correct,
            distractor,
        } => {
            let get = |id: u32| {
                out.get(id as usize)
                    .copied()
                    .ok_or(Error::TokenOutOfRange(id))
            };
            Ok(get(*correct)? > get(*distractor)?)
        }
        OriginalTask::Greater { start, year_ids } => {
            let p = softmax(out.view());
            let mut later = 0.0;
            let mut earlier = 0.0;
            for (yy, &id) in year_ids.iter().enumerate() {
                let q = *p.get(id as usize).ok_or(Error::TokenOutOfRange(id))?;
                if yy > *start as usize {
                    later += q;
                } else {
                    earlier += q;
                }
            }
            Ok(later > earlier)
        }
    }
}

/// Accuracy (%) on original-format prompts, typically with persistently
/// edited weights.
pub fn damage_eval(
    weights: &ModelWeights,
    samples: &[OriginalSample],
    exec: Execution,
) -> Result<f64> {
    non_empty(samples)?;
    let hits = par::try_map(samples, exec, |s| original_correct(weights, s))?;
    Ok(100.0 * hits.iter().filter(|&&h| h).count() as f64 / samples.len() as f64)
}

/// Accuracy with `k` solved exemplars prepended to every prompt. Exemplars
/// come from `pool`, never from `samples` (matched by id and question), and
/// are assigned round-robin over a seeded shuffle.
#[allow(clippy::too_many_arguments)]
pub fn few_shot_eval(
    weights: &ModelWeights,
    codec: &dyn Codec,
    samples: &[McqSample],
    pool: &[McqSample],
    k: usize,
    seed: u64,
    opts: EvalOptions,
    meta: &EvalMeta,
) -> Result<EvalResult> {
    non_empty(samples)?;
    let letters = codec.letter_set(true)?;
    if k == 0 {
        let t = tally_over(samples, opts.exec, |s| {
            classify(weights, s.unlabeled(), &letters, &[], opts.domain)
        })?;
        return EvalResult::from_tally(meta, Condition::KShot { k: 0 }, Split::All, opts.domain, t);
    }
    let ids: HashSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    let questions: HashSet<&str> = samples.iter().map(|s| s.question.as_str()).collect();
    let mut usable: Vec<Exemplar> = pool
        .iter()
        .filter(|p| !ids.contains(p.id.as_str()) && !questions.contains(p.question.as_str()))
        .map(McqSample::exemplar)
        .collect();
    if usable.len() < k {
        return Err(Error::InsufficientExemplars {
            needed: k,
            found: usable.len(),
        });
    }
    usable.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let prompts: Vec<McqSample> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let ex: Vec<Exemplar> = (0..k)
                .map(|j| usable[(i * k + j) % usable.len()].clone())
                .collect();
            with_exemplars(codec, s, &ex)
        })
        .collect::<Result<_>>()?;
    let t = tally_over(&prompts, opts.exec, |s| {
        classify(weights, s.unlabeled(), &letters, &[], opts.domain)
    })?;
    EvalResult::from_tally(meta, Condition::KShot { k }, Split::All, opts.domain, t)
}
