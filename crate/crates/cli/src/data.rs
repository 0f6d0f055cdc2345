use std::path::{Path, PathBuf};

use anchorscope::datasets::{
    ingest, split, synth_greater, synth_ioi, synth_random, GreaterConfig, IngestFormat, McqSample,
    RandomKind, SplitSpec, RANDOM_DEFAULT_COUNT,
};
use anchorscope::discovery::anchored_subset;
use anchorscope::model::{load_checkpoint_dir, ModelId, ModelWeights};
use anchorscope::tokenizer::{Codec, Tokenizer};
use anchorscope::toyforge::{build_toy, toy_samples, ToySpec, ToyVocab};
use anchorscope::{Execution, LetterSet};
use anyhow::{anyhow, bail, Context, Result};
use log::info;

use crate::config::RunConfig;

pub const SYNTH_DEFAULT_COUNT: usize = 400;

/// Root of the checkpoint cache: `$ANCHORSCOPE_CACHE`, else `~/.cache/anchorscope`.
pub fn cache_root() -> PathBuf {
    if let Some(dir) = std::env::var_os("ANCHORSCOPE_CACHE") {
        return PathBuf::from(dir);
    }
    let home = std::env::var_os("HOME").map_or_else(|| PathBuf::from("."), PathBuf::from);
    home.join(".cache").join("anchorscope")
}

fn checkpoint_dir(cfg: &RunConfig) -> Result<PathBuf> {
    if let Some(dir) = &cfg.checkpoint {
        return Ok(dir.clone());
    }
    let id: ModelId = cfg.model.parse()?;
    Ok(cache_root().join(id.hub_name()))
}

fn toy_spec(cfg: &RunConfig) -> Result<ToySpec> {
    match &cfg.toy_spec {
        None => Ok(ToySpec::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading toy spec {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing toy spec {}", p.display()))
        }
    }
}

pub fn load_codec(cfg: &RunConfig) -> Result<Box<dyn Codec>> {
    if cfg.is_toy() {
        return Ok(Box::new(ToyVocab));
    }
    let dir = match &cfg.tokenizer {
        Some(d) => d.clone(),
        None => checkpoint_dir(cfg)?,
    };
    let (vocab, merges) = (dir.join("vocab.json"), dir.join("merges.txt"));
    for f in [&vocab, &merges] {
        if !f.is_file() {
            bail!(
                "missing tokenizer file {} (run `anchorscope fetch` or pass --tokenizer)",
                f.display()
            );
        }
    }
    Ok(Box::new(Tokenizer::from_files(&vocab, &merges)?))
}

pub fn load_weights(cfg: &RunConfig) -> Result<ModelWeights> {
    if cfg.is_toy() {
        return Ok(build_toy(&toy_spec(cfg)?)?.weights);
    }
    let dir = checkpoint_dir(cfg)?;
    if !dir.join("model.safetensors").is_file() {
        bail!(
            "no checkpoint at {} (run `anchorscope fetch --model {}` or pass --checkpoint)",
            dir.display(),
            cfg.model
        );
    }
    info!("loading checkpoint from {}", dir.display());
    load_checkpoint_dir(&dir).with_context(|| format!("loading checkpoint {}", dir.display()))
}

/// Model, codec and letter ids for a run.
pub struct RunContext {
    pub weights: ModelWeights,
    pub codec: Box<dyn Codec>,
    pub letters: LetterSet,
}

pub fn load_context(cfg: &RunConfig) -> Result<RunContext> {
    let codec = load_codec(cfg)?;
    let weights = load_weights(cfg)?;
    let letters = codec.letter_set(cfg.leading_space)?;
    Ok(RunContext {
        weights,
        codec,
        letters,
    })
}

/// A parsed `--dataset` argument.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Ioi { count: usize },
    Greater { count: usize },
    RandomChars { count: usize },
    RandomWords { path: PathBuf, count: usize },
    Ingest { format: IngestFormat, path: PathBuf },
    Toy { count: usize, arity: usize },
}

fn count_arg(s: Option<&str>, default: usize, spec: &str) -> Result<usize> {
    match s {
        None => Ok(default),
        Some(n) => n
            .parse()
            .map_err(|_| anyhow!("bad count `{n}` in dataset `{spec}`")),
    }
}

/// Splits `PATH[:N]`, treating the suffix as a count only when it is numeric.
fn path_and_count(rest: &str) -> (PathBuf, Option<&str>) {
    match rest.rsplit_once(':') {
        Some((p, n)) if !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) => {
            (PathBuf::from(p), Some(n))
        }
        _ => (PathBuf::from(rest), None),
    }
}

impl std::str::FromStr for DatasetSpec {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').map_or((s, None), |(k, r)| (k, Some(r)));
        let needs_path = || {
            rest.filter(|r| !r.is_empty())
                .ok_or_else(|| anyhow!("dataset `{kind}` needs a path: `{kind}:PATH`"))
        };
        Ok(match kind {
            "ioi" => DatasetSpec::Ioi {
                count: count_arg(rest, SYNTH_DEFAULT_COUNT, s)?,
            },
            "greater" => DatasetSpec::Greater {
                count: count_arg(rest, SYNTH_DEFAULT_COUNT, s)?,
            },
            "random-chars" | "random-characters" => DatasetSpec::RandomChars {
                count: count_arg(rest, RANDOM_DEFAULT_COUNT, s)?,
            },
            "random-words" => {
                let (path, n) = path_and_count(needs_path()?);
                DatasetSpec::RandomWords {
                    path,
                    count: count_arg(n, RANDOM_DEFAULT_COUNT, s)?,
                }
            }
            "arc" | "csqa" | "ld" | "jsonl" => DatasetSpec::Ingest {
                format: kind.parse()?,
                path: PathBuf::from(needs_path()?),
            },
            "toy" => {
                let mut parts = rest.map(|r| r.split(':')).into_iter().flatten();
                DatasetSpec::Toy {
                    count: count_arg(parts.next(), 100, s)?,
                    arity: count_arg(parts.next(), 4, s)?,
                }
            }
            other => bail!("unknown dataset kind `{other}`"),
        })
    }
}

impl DatasetSpec {
    /// Short label used in file names and result rows.
    pub fn name(&self) -> String {
        match self {
            DatasetSpec::Ioi { .. } => "ioi".into(),
            DatasetSpec::Greater { .. } => "greater".into(),
            DatasetSpec::RandomChars { .. } => "random-characters".into(),
            DatasetSpec::RandomWords { .. } => "random-words".into(),
            DatasetSpec::Ingest { format, path } => {
                let stem = path
                    .file_stem()
                    .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
                format!("{}-{stem}", format.tag())
            }
            DatasetSpec::Toy { .. } => "toy".into(),
        }
    }

    pub fn is_synthetic(&self) -> bool {
        !matches!(self, DatasetSpec::Ingest { .. })
    }

    /// Samples with gold != A. Ingested records whose gold is A are dropped
    /// here and counted in the log.
    pub fn load(&self, codec: &dyn Codec, seed: u64) -> Result<Vec<McqSample>> {
        let samples = match self {
            DatasetSpec::Ioi { count } => synth_ioi(codec, *count, seed)?,
            DatasetSpec::Greater { count } => {
                synth_greater(codec, *count, seed, &GreaterConfig::default())?
            }
            DatasetSpec::RandomChars { count } => {
                synth_random(codec, &RandomKind::Characters, *count, 2..=5, seed)?
            }
            DatasetSpec::RandomWords { path, count } => synth_random(
                codec,
                &RandomKind::words_from_file(path)?,
                *count,
                2..=5,
                seed,
            )?,
            DatasetSpec::Ingest { format, path } => {
                let got = ingest(codec, *format, path)?;
                info!(
                    "{}: {} usable, {} with gold A set aside, {} skipped",
                    path.display(),
                    got.samples.len(),
                    got.gold_a.len(),
                    got.skipped
                );
                got.samples
            }
            DatasetSpec::Toy { count, arity } => toy_samples(*count, *arity, seed)?,
        };
        Ok(samples)
    }
}

pub fn parse_datasets(cfg: &RunConfig) -> Result<Vec<DatasetSpec>> {
    let specs: Vec<DatasetSpec> = cfg
        .datasets
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_>>()?;
    let mut names: Vec<String> = specs.iter().map(DatasetSpec::name).collect();
    names.sort();
    if names.windows(2).any(|w| w[0] == w[1]) {
        bail!("dataset names must be unique, got {names:?}");
    }
    Ok(specs)
}

/// The anchored subset of one dataset, split into Infer and Eva.
pub struct Prepared {
    pub name: String,
    pub total: usize,
    pub infer: Vec<McqSample>,
    pub eva: Vec<McqSample>,
}

pub fn prepare(
    ctx: &RunContext,
    spec: &DatasetSpec,
    cfg: &RunConfig,
    exec: Execution,
) -> Result<Prepared> {
    let name = spec.name();
    let samples = spec.load(ctx.codec.as_ref(), cfg.seed)?;
    let anchored = anchored_subset(
        &ctx.weights,
        &ctx.letters,
        &samples,
        cfg.argmax_domain,
        exec,
    )?;
    if anchored.is_empty() {
        bail!(
            "no anchored samples in dataset `{name}` ({} prompts scanned)",
            samples.len()
        );
    }
    let (infer, eva) = split(&anchored, &SplitSpec::new(cfg.seed)).with_context(|| {
        format!(
            "splitting the {} anchored samples of `{name}`",
            anchored.len()
        )
    })?;
    info!(
        "{name}: {} of {} prompts anchored, {} infer / {} eva",
        anchored.len(),
        samples.len(),
        infer.len(),
        eva.len()
    );
    Ok(Prepared {
        name,
        total: samples.len(),
        infer,
        eva,
    })
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .with_context(|| format!("missing or unreadable file {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!(
            "ioi".parse::<DatasetSpec>().unwrap(),
            DatasetSpec::Ioi { count: 400 }
        );
        assert_eq!(
            "greater:50".parse::<DatasetSpec>().unwrap(),
            DatasetSpec::Greater { count: 50 }
        );
        assert_eq!(
            "random-words:/tmp/w.txt:30".parse::<DatasetSpec>().unwrap(),
            DatasetSpec::RandomWords {
                path: "/tmp/w.txt".into(),
                count: 30
            }
        );
        assert_eq!(
            "arc:data/arc.jsonl".parse::<DatasetSpec>().unwrap(),
            DatasetSpec::Ingest {
                format: IngestFormat::ArcJson,
                path: "data/arc.jsonl".into()
            }
        );
        assert_eq!(
            "toy:20:3".parse::<DatasetSpec>().unwrap(),
            DatasetSpec::Toy {
                count: 20,
                arity: 3
            }
        );
        assert!("arc".parse::<DatasetSpec>().is_err());
        assert!("ioi:many".parse::<DatasetSpec>().is_err());
        assert!("mmlu".parse::<DatasetSpec>().is_err());
    }
}
