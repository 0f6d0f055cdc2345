use std::collections::HashSet;
use std::ops::RangeInclusive;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::banks::{banks, Banks};
use super::sample::{build_sample, McqSample};
use crate::error::{Error, Result};
use crate::letter::Letter;
use crate::tokenizer::Codec;

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "sample count must be positive".into(),
        ));
    }
    Ok(())
}

fn pick<'a, R: Rng>(rng: &mut R, xs: &'a [String]) -> &'a str {
    xs.choose(rng).expect("bank lists are non-empty")
}

struct IoiDraw {
    template: String,
    subject: String,
    indirect: String,
    place: String,
    object: String,
}

impl IoiDraw {
    fn sentence(&self) -> String {
        self.template
            .replace("{S}", &self.subject)
            .replace("{IO}", &self.indirect)
            .replace("{PLACE}", &self.place)
            .replace("{OBJECT}", &self.object)
    }
}

/// Draws `count` IOI scenarios with distinct (subject, indirect object,
/// place, object) tuples.
fn draw_ioi(b: &Banks, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<IoiDraw>> {
    let space = b.names.len() * (b.names.len() - 1) * b.places.len() * b.objects.len();
    if count > space {
        return Err(Error::InvalidArgument(format!(
            "only {space} distinct IOI tuples exist, asked for {count}"
        )));
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let pair = index::sample(rng, b.names.len(), 2);
        let draw = IoiDraw {
            template: pick(rng, &b.ioi_templates).to_string(),
            subject: b.names[pair.index(0)].clone(),
            indirect: b.names[pair.index(1)].clone(),
            place: pick(rng, &b.places).to_string(),
            object: pick(rng, &b.objects).to_string(),
        };
        let key = (
            draw.subject.clone(),
            draw.indirect.clone(),
            draw.place.clone(),
            draw.object.clone(),
        );
        if seen.insert(key) {
            out.push(draw);
        }
    }
    Ok(out)
}

/// Two-choice IOI questions: A is the repeated subject (wrong), B the
/// indirect object (gold).
pub fn synth_ioi(codec: &dyn Codec, count: usize, seed: u64) -> Result<Vec<McqSample>> {
    check_count(count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw_ioi(banks(), count, &mut rng)?
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let choices = vec![d.subject.clone(), d.indirect.clone()];
            build_sample(
                codec,
                &format!("ioi-{i}"),
                "ioi",
                &d.sentence(),
                &choices,
                Letter::B,
                &[],
            )
        })
        .collect()
}

/// Range of the two-digit start year for the greater-than task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreaterConfig {
    pub start_min: u8,
    pub start_max: u8,
}

impl Default for GreaterConfig {
    fn default() -> Self {
        GreaterConfig {
            start_min: 2,
            start_max: 90,
        }
    }
}

struct GreaterDraw {
    question: String,
    start: u8,
}

fn draw_greater(b: &Banks, cfg: &GreaterConfig, rng: &mut ChaCha8Rng) -> GreaterDraw {
    let start = rng.gen_range(cfg.start_min..=cfg.start_max);
    let question = b
        .greater_template
        .replace("{NOUN}", pick(rng, &b.greater_nouns))
        .replace("{CENTURY}", &b.greater_century)
        .replace("{START}", &format!("{start:02}"));
    GreaterDraw { question, start }
}

/// Four-choice greater-than questions. Choice A and the two non-gold
/// distractors are years not after the start year; the gold (uniform over
/// B, C, D) is the only later year.
pub fn synth_greater(
    codec: &dyn Codec,
    count: usize,
    seed: u64,
    cfg: &GreaterConfig,
) -> Result<Vec<McqSample>> {
    check_count(count)?;
    if cfg.start_min < 2 || cfg.start_max > 98 || cfg.start_min > cfg.start_max {
        return Err(Error::InvalidArgument(format!(
            "start range {}..={} must lie in 2..=98",
            cfg.start_min, cfg.start_max
        )));
    }
    let b = banks();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let d = draw_greater(b, cfg, &mut rng);
            let invalid = index::sample(&mut rng, d.start as usize + 1, 3);
            let valid = rng.gen_range(d.start + 1..=99);
            let gold = rng.gen_range(1..4usize);
            let mut years = Vec::with_capacity(4);
            let mut inv = invalid.iter();
            for slot in 0..4 {
                let yy = if slot == gold {
                    valid as usize
                } else {
                    inv.next().expect("three invalid years")
                };
                years.push(format!("{}{yy:02}", b.greater_century));
            }
            build_sample(
                codec,
                &format!("greater-{i}"),
                "greater",
                &d.question,
                &years,
                Letter::from_index(gold)?,
                &[],
            )
        })
        .collect()
}

/// Source of filler words for random prompts.
#[derive(Debug, Clone, PartialEq)]
pub enum RandomKind {
    /// Lowercase strings of 5 to 10 letters.
    Characters,
    /// Words drawn from a list.
    Words(Vec<String>),
}

impl RandomKind {
    pub fn tag(&self) -> &'static str {
        match self {
            RandomKind::Characters => "random-characters",
            RandomKind::Words(_) => "random-words",
        }
    }

    /// Reads a word list, one word per line.
    pub fn words_from_file(path: &std::path::Path) -> Result<RandomKind> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let words: Vec<String> = text
            .lines()
            .map(str::trim)
            .filter(|w| !w.is_empty())
            .map(String::from)
            .collect();
        if words.is_empty() {
            return Err(Error::EmptyWordList);
        }
        Ok(RandomKind::Words(words))
    }

    fn word(&self, rng: &mut ChaCha8Rng) -> String {
        match self {
            RandomKind::Characters => {
                let n = rng.gen_range(5..=10);
                (0..n).map(|_| rng.gen_range(b'a'..=b'z') as char).collect()
            }
            RandomKind::Words(ws) => pick(rng, ws).to_string(),
        }
    }

    fn words(&self, rng: &mut ChaCha8Rng, n: usize) -> String {
        (0..n).map(|_| self.word(rng)).collect::<Vec<_>>().join(" ")
    }
}

pub const RANDOM_DEFAULT_COUNT: usize = 80;

/// Content-free questions with 2 to 5 choices and a gold letter drawn
/// uniformly from the non-A letters.
pub fn synth_random(
    codec: &dyn Codec,
    kind: &RandomKind,
    count: usize,
    arity: RangeInclusive<usize>,
    seed: u64,
) -> Result<Vec<McqSample>> {
    check_count(count)?;
    if *arity.start() < 2 || *arity.end() > 5 || arity.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "arity range {arity:?} must lie in 2..=5"
        )));
    }
    if matches!(kind, RandomKind::Words(w) if w.is_empty()) {
        return Err(Error::EmptyWordList);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.gen_range(arity.clone());
            let q_len = rng.gen_range(8..=13);
            let question = format!("{}?", kind.words(&mut rng, q_len));
            let choices: Vec<String> = (0..n)
                .map(|_| {
                    let len = rng.gen_range(1..=5);
                    kind.words(&mut rng, len)
                })
                .collect();
            let gold = Letter::from_index(rng.gen_range(1..n))?;
            build_sample(
                codec,
                &format!("{}-{i}", kind.tag()),
                kind.tag(),
                &question,
                &choices,
                gold,
                &[],
            )
        })
        .collect()
}

/// A prompt from the original (non multiple-choice) task formulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginalSample {
    pub id: String,
    pub prompt: String,
    pub tokens: Vec<u32>,
    pub task: OriginalTask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OriginalTask {
    /// Correct iff the indirect object's name outscores the subject's.
    Ioi { correct: u32, distractor: u32 },
    /// Correct iff later two-digit years carry more probability than
    /// earlier-or-equal ones. `year_ids[yy]` is the token for `yy`.
    Greater { start: u8, year_ids: Vec<u32> },
}

/// Sentence-completion IOI prompts ending in "... gave a bone to".
pub fn synth_original_ioi(
    codec: &dyn Codec,
    count: usize,
    seed: u64,
) -> Result<Vec<OriginalSample>> {
    check_count(count)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for (i, d) in draw_ioi(banks(), count, &mut rng)?.into_iter().enumerate() {
        let correct = codec.encode(&format!(" {}", d.indirect));
        let distractor = codec.encode(&format!(" {}", d.subject));
        match (correct.as_slice(), distractor.as_slice()) {
            ([c], [w]) if c != w => {
                let prompt = d.sentence();
                out.push(OriginalSample {
                    id: format!("ioi-original-{i}"),
                    tokens: codec.encode(&prompt),
                    prompt,
                    task: OriginalTask::Ioi {
                        correct: *c,
                        distractor: *w,
                    },
                });
            }
            _ => log::warn!(
                "skipping IOI sample {i}: `{}`/`{}` are not distinct single tokens",
                d.indirect,
                d.subject
            ),
        }
    }
    Ok(out)
}

/// Sentence-completion prompts ending in "... to the year 17".
pub fn synth_original_greater(
    codec: &dyn Codec,
    count: usize,
    seed: u64,
    cfg: &GreaterConfig,
) -> Result<Vec<OriginalSample>> {
    check_count(count)?;
    let year_ids: Option<Vec<u32>> = (0..100)
        .map(|yy| match codec.encode(&format!("{yy:02}")).as_slice() {
            [id] => Some(*id),
            _ => None,
        })
        .collect();
    let Some(year_ids) = year_ids else {
        log::warn!("two-digit years are not single tokens; skipping all greater-than samples");
        return Ok(Vec::new());
    };
    let b = banks();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|i| {
            let d = draw_greater(b, cfg, &mut rng);
            OriginalSample {
                id: format!("greater-original-{i}"),
                tokens: codec.encode(&d.question),
                prompt: d.question,
                task: OriginalTask::Greater {
                    start: d.start,
                    year_ids: year_ids.clone(),
                },
            }
        })
        .collect())
}
