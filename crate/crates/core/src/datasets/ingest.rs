use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::sample::{build_sample, McqSample};
use crate::error::{Error, Result};
use crate::letter::Letter;
use crate::tokenizer::Codec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IngestFormat {
    /// Big-bench task JSON: `examples[].{input, target_scores}`.
    LdJson,
    /// ARC release layout: `{question: {stem, choices: [{label, text}]}, answerKey}`.
    ArcJson,
    /// CommonsenseQA release layout (same shape as ARC).
    CsqaJson,
    /// One `{"question", "choices", "gold", "tag"}` object per line.
    GenericJsonl,
}

impl IngestFormat {
    pub fn tag(self) -> &'static str {
        match self {
            IngestFormat::LdJson => "ld",
            IngestFormat::ArcJson => "arc",
            IngestFormat::CsqaJson => "csqa",
            IngestFormat::GenericJsonl => "generic",
        }
    }
}

impl fmt::Display for IngestFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IngestFormat::LdJson => "ld-json",
            IngestFormat::ArcJson => "arc-json",
            IngestFormat::CsqaJson => "csqa-json",
            IngestFormat::GenericJsonl => "generic-jsonl",
        })
    }
}

impl FromStr for IngestFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ld" | "ld-json" => Ok(IngestFormat::LdJson),
            "arc" | "arc-json" => Ok(IngestFormat::ArcJson),
            "csqa" | "csqa-json" => Ok(IngestFormat::CsqaJson),
            "generic" | "generic-jsonl" | "jsonl" => Ok(IngestFormat::GenericJsonl),
            other => Err(Error::InvalidArgument(format!(
                "unknown dataset format `{other}`"
            ))),
        }
    }
}

/// Ingested samples. Records whose gold answer is A are kept apart since the
/// bias analysis needs gold letters other than A.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub samples: Vec<McqSample>,
    pub gold_a: Vec<McqSample>,
    pub skipped: usize,
}

impl Ingested {
    pub fn usable(&self) -> usize {
        self.samples.len() + self.gold_a.len()
    }
}

/// Record shape of the generic JSONL format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericRecord {
    #[serde(default)]
    pub id: Option<String>,
    pub question: String,
    pub choices: Vec<String>,
    pub gold: Letter,
    #[serde(default)]
    pub tag: Option<String>,
}

struct Raw {
    id: String,
    tag: String,
    question: String,
    choices: Vec<String>,
    gold: Letter,
}

fn ld_records(text: &str, tag: &str) -> Result<Vec<std::result::Result<Raw, String>>> {
    let doc: Value = serde_json::from_str(text)?;
    let examples = doc
        .get("examples")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::InvalidArgument("big-bench file has no `examples` array".into()))?;
    Ok(examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let question = ex
                .get("input")
                .and_then(Value::as_str)
                .ok_or("missing `input`")?;
            let scores = ex
                .get("target_scores")
                .and_then(Value::as_object)
                .ok_or("missing `target_scores`")?;
            let mut choices = Vec::with_capacity(scores.len());
            let mut gold = None;
            for (k, (text, score)) in scores.iter().enumerate() {
                choices.push(text.clone());
                if score.as_f64().ok_or("non-numeric target score")? > 0.0 {
                    if gold.is_some() {
                        return Err("more than one correct option".to_string());
                    }
                    gold = Some(k);
                }
            }
            let gold = gold.ok_or("no correct option")?;
            Ok(Raw {
                id: format!("{tag}-{i}"),
                tag: tag.to_string(),
                question: question.to_string(),
                choices,
                gold: Letter::from_index(gold).map_err(|e| e.to_string())?,
            })
        })
        .collect())
}

fn qa_record(v: &Value, i: usize, tag: &str) -> std::result::Result<Raw, String> {
    let q = v.get("question").ok_or("missing `question`")?;
    let stem = q
        .get("stem")
        .and_then(Value::as_str)
        .ok_or("missing `question.stem`")?;
    let opts = q
        .get("choices")
        .and_then(Value::as_array)
        .ok_or("missing `question.choices`")?;
    let key = v
        .get("answerKey")
        .and_then(Value::as_str)
        .ok_or("missing `answerKey`")?;
    let mut choices = Vec::with_capacity(opts.len());
    let mut gold = None;
    for (k, o) in opts.iter().enumerate() {
        let label = o
            .get("label")
            .and_then(Value::as_str)
            .ok_or("choice without `label`")?;
        let text = o
            .get("text")
            .and_then(Value::as_str)
            .ok_or("choice without `text`")?;
        if label == key {
            gold = Some(k);
        }
        choices.push(text.to_string());
    }
    let gold = gold.ok_or_else(|| format!("answer key `{key}` matches no label"))?;
    let id = v
        .get("id")
        .and_then(Value::as_str)
        .map_or_else(|| format!("{tag}-{i}"), String::from);
    Ok(Raw {
        id,
        tag: tag.to_string(),
        question: stem.to_string(),
        choices,
        gold: Letter::from_index(gold).map_err(|e| e.to_string())?,
    })
}

/// Values from a file that is either one JSON array or JSON lines.
fn json_values(text: &str) -> Vec<std::result::Result<Value, String>> {
    if text.trim_start().starts_with('[') {
        match serde_json::from_str::<Vec<Value>>(text) {
            Ok(vs) => vs.into_iter().map(Ok).collect(),
            Err(e) => vec![Err(e.to_string())],
        }
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| e.to_string()))
            .collect()
    }
}

fn generic_record(v: Value, i: usize) -> std::result::Result<Raw, String> {
    let r: GenericRecord = serde_json::from_value(v).map_err(|e| e.to_string())?;
    let tag = r.tag.unwrap_or_else(|| "generic".into());
    Ok(Raw {
        id: r.id.unwrap_or_else(|| format!("{tag}-{i}")),
        tag,
        question: r.question,
        choices: r.choices,
        gold: r.gold,
    })
}

/// Parses `text` in `format` and renders every usable record.
pub fn ingest_str(codec: &dyn Codec, format: IngestFormat, text: &str) -> Result<Ingested> {
    let tag = format.tag();
    let raws = match format {
        IngestFormat::LdJson => ld_records(text, tag)?,
        IngestFormat::ArcJson | IngestFormat::CsqaJson => json_values(text)
            .into_iter()
            .enumerate()
            .map(|(i, v)| qa_record(&v?, i, tag))
            .collect(),
        IngestFormat::GenericJsonl => json_values(text)
            .into_iter()
            .enumerate()
            .map(|(i, v)| generic_record(v?, i))
            .collect(),
    };
    let mut out = Ingested::default();
    for (i, raw) in raws.into_iter().enumerate() {
        let built = raw.and_then(|r| {
            build_sample(codec, &r.id, &r.tag, &r.question, &r.choices, r.gold, &[])
                .map_err(|e| e.to_string())
        });
        match built {
            Ok(s) if s.gold == Letter::A => out.gold_a.push(s),
            Ok(s) => out.samples.push(s),
            Err(e) => {
                log::warn!("{format} record {i} skipped: {e}");
                out.skipped += 1;
            }
        }
    }
    if out.usable() == 0 {
        return Err(Error::NoUsableRecords(format!(
            "{format} input ({} skipped)",
            out.skipped
        )));
    }
    Ok(out)
}

pub fn ingest(codec: &dyn Codec, format: IngestFormat, path: &Path) -> Result<Ingested> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_str(codec, format, &text)
}

pub fn to_generic(s: &McqSample) -> GenericRecord {
    GenericRecord {
        id: Some(s.id.clone()),
        question: s.question.clone(),
        choices: s.choices.clone(),
        gold: s.gold,
        tag: Some(s.tag.clone()),
    }
}

/// Writes samples as generic JSONL.
pub fn export_jsonl<W: Write>(samples: &[McqSample], mut out: W) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut out, &to_generic(s))?;
        out.write_all(b"\n")
            .map_err(|e| Error::io(Path::new("<jsonl>"), e))?;
    }
    Ok(())
}
