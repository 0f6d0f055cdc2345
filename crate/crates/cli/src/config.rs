use std::path::{Path, PathBuf};

use anchorscope::discovery::{DEFAULT_THRESHOLD, DEFAULT_TOP_K};
use anchorscope::eval::ArgmaxDomain;
use anchorscope::lens::Sigma;
use anchorscope::mitigation::{DEFAULT_LAMBDA1, DEFAULT_LAMBDA2};
use anchorscope::Letter;
use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Edit,
    Swap,
    SwapLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DomainArg {
    Letters,
    Vocab,
}

impl From<DomainArg> for ArgmaxDomain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Letters => ArgmaxDomain::Letters,
            DomainArg::Vocab => ArgmaxDomain::Vocab,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaArg {
    LearnedLn,
    PlainLn,
}

impl From<SigmaArg> for Sigma {
    fn from(s: SigmaArg) -> Self {
        match s {
            SigmaArg::LearnedLn => Sigma::LearnedLn,
            SigmaArg::PlainLn => Sigma::PlainLn,
        }
    }
}

/// Fully resolved settings of one run. Persisted verbatim in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `small`, `medium`, `large`, `xl` or `toy`.
    pub model: String,
    pub checkpoint: Option<PathBuf>,
    /// Directory holding `vocab.json` and `merges.txt`; defaults to the checkpoint directory.
    pub tokenizer: Option<PathBuf>,
    /// JSON toy spec for `--model toy`; the built-in default toy otherwise.
    pub toy_spec: Option<PathBuf>,
    pub datasets: Vec<String>,
    pub seed: u64,
    pub threshold: f32,
    pub top_k: usize,
    pub lambda1: f32,
    pub lambda2: Vec<f32>,
    pub argmax_domain: ArgmaxDomain,
    pub sigma: Sigma,
    pub leading_space: bool,
    pub k_shot: usize,
    pub mode: Mode,
    pub loci: Vec<String>,
    pub heads: Vec<String>,
    /// Directory of an earlier `discover` run to take loci and heads from.
    pub from: Option<PathBuf>,
    /// Letter that persistent edits steer towards in damage checks.
    pub target: Letter,
    pub threads: Option<usize>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: "small".into(),
            checkpoint: None,
            tokenizer: None,
            toy_spec: None,
            datasets: Vec::new(),
            seed: 0,
            threshold: DEFAULT_THRESHOLD,
            top_k: DEFAULT_TOP_K,
            lambda1: DEFAULT_LAMBDA1,
            lambda2: vec![DEFAULT_LAMBDA2],
            argmax_domain: ArgmaxDomain::Letters,
            sigma: Sigma::LearnedLn,
            leading_space: true,
            k_shot: 0,
            mode: Mode::Edit,
            loci: Vec::new(),
            heads: Vec::new(),
            from: None,
            target: Letter::B,
            threads: None,
            out: PathBuf::from("runs/latest"),
        }
    }
}

impl RunConfig {
    /// Reads a config file, or the `config` object of a run manifest.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut value: serde_json::Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_json::from_value(value).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn is_toy(&self) -> bool {
        self.model == "toy"
    }

    pub fn default_datasets(&self) -> Vec<String> {
        if self.is_toy() {
            vec!["toy".into()]
        } else {
            vec!["ioi".into()]
        }
    }
}

/// Flags shared by the run commands. Every flag left unset falls back to the
/// config file, then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON config file or earlier run manifest.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// small, medium, large, xl or toy.
    #[arg(long)]
    pub model: Option<String>,
    /// Checkpoint directory (config.json + model.safetensors).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory with vocab.json and merges.txt.
    #[arg(long)]
    pub tokenizer: Option<PathBuf>,
    #[arg(long)]
    pub toy_spec: Option<PathBuf>,
    /// ioi[:N], greater[:N], random-chars[:N], random-words:PATH[:N],
    /// arc:PATH, csqa:PATH, ld:PATH, jsonl:PATH, toy[:N[:ARITY]]. Repeatable.
    #[arg(long = "dataset")]
    pub datasets: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f32>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub lambda1: Option<f32>,
    /// Repeat for a sweep.
    #[arg(long = "lambda2")]
    pub lambda2: Vec<f32>,
    #[arg(long, value_enum)]
    pub argmax_domain: Option<DomainArg>,
    #[arg(long, value_enum)]
    pub sigma: Option<SigmaArg>,
    /// Compare bare letter tokens ("A") instead of space-prefixed ones (" A").
    #[arg(long)]
    pub bare_letters: bool,
    #[arg(long, value_parser = clap::value_parser!(u32).range(0..=2))]
    pub k_shot: Option<u32>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Value vector LAYER:DIM. Repeatable.
    #[arg(long = "locus")]
    pub loci: Vec<String>,
    /// Attention head L<layer>H<head>. Repeatable.
    #[arg(long = "head")]
    pub heads: Vec<String>,
    #[arg(long)]
    pub from: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<Letter>,
    /// Worker threads for sample-parallel work; 1 runs sequentially.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let pick_vec = |flag: &Vec<String>, file: Vec<String>| {
            if flag.is_empty() {
                file
            } else {
                flag.clone()
            }
        };
        let mut cfg = RunConfig {
            model: self.model.clone().unwrap_or(base.model),
            checkpoint: self.checkpoint.clone().or(base.checkpoint),
            tokenizer: self.tokenizer.clone().or(base.tokenizer),
            toy_spec: self.toy_spec.clone().or(base.toy_spec),
            datasets: pick_vec(&self.datasets, base.datasets),
            seed: self.seed.unwrap_or(base.seed),
            threshold: self.threshold.unwrap_or(base.threshold),
            top_k: self.top_k.unwrap_or(base.top_k),
            lambda1: self.lambda1.unwrap_or(base.lambda1),
            lambda2: if self.lambda2.is_empty() {
                base.lambda2
            } else {
                self.lambda2.clone()
            },
            argmax_domain: self.argmax_domain.map_or(base.argmax_domain, Into::into),
            sigma: self.sigma.map_or(base.sigma, Into::into),
            leading_space: base.leading_space && !self.bare_letters,
            k_shot: self.k_shot.map_or(base.k_shot, |k| k as usize),
            mode: self.mode.unwrap_or(base.mode),
            loci: pick_vec(&self.loci, base.loci),
            heads: pick_vec(&self.heads, base.heads),
            from: self.from.clone().or(base.from),
            target: self.target.unwrap_or(base.target),
            threads: self.threads.or(base.threads),
            out: self.out.clone().unwrap_or(base.out),
        };
        if cfg.datasets.is_empty() {
            cfg.datasets = cfg.default_datasets();
        }
        if cfg.lambda2.is_empty() {
            bail!("at least one lambda2 value is required");
        }
        if cfg.target == Letter::A {
            bail!("the edit target must differ from A");
        }
        if cfg.k_shot > 2 {
            bail!("k-shot must be 0, 1 or 2");
        }
        Ok(cfg)
    }
}
