//! On-disk formats shared by `discover`, `mitigate` and `report`.

use anchorscope::discovery::{BiasReport, REPORT_SCHEMA_VERSION};
use anchorscope::lens::{top_k_tokens, Lens, Sigma, Source};
use anchorscope::mitigation::{HeadRef, Locus};
use anchorscope::model::ModelWeights;
use anchorscope::TokenText;
use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

pub const LOCI_FILE: &str = "loci.json";
pub const CIRCUIT_FILE: &str = "circuit.json";
pub const MLP_CSV: &str = "mlp_diff.csv";
pub const HEAD_CSV: &str = "head_diff.csv";
pub const RESULTS_FILE: &str = "results.json";
pub const LENS_TOKENS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LociFile {
    pub schema_version: u32,
    pub model: String,
    pub sigma: Sigma,
    pub threshold: f32,
    pub top_k: usize,
    pub datasets: Vec<DatasetLoci>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetLoci {
    pub dataset: String,
    pub prompts: usize,
    pub anchored: usize,
    pub infer: usize,
    pub eva: usize,
    pub anchored_rate: f64,
    pub argmax_layer: Option<usize>,
    pub top_heads: Vec<HeadEntry>,
    pub loci: Vec<LocusEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadEntry {
    pub head: HeadRef,
    pub mean_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocusEntry {
    pub locus: Locus,
    pub frequency: f64,
    pub mean_diff: f64,
    pub contrib: f64,
    pub detections: usize,
    /// Lens reading of the unscaled value vector.
    pub top_tokens: Vec<String>,
}

/// Checks `schema_version` before decoding, so old files get a clear refusal.
pub fn check_version(text: &str, file: &str, expected: u32) -> Result<()> {
    let v: serde_json::Value = serde_json::from_str(text)?;
    let found = v.get("schema_version").and_then(|x| x.as_u64());
    match found {
        Some(f) if f == expected as u64 => Ok(()),
        Some(f) => bail!(
            "{file} has schema version {f}, this build reads version {expected}; \
             regenerate it with this version of anchorscope"
        ),
        None => bail!("{file} has no schema_version field"),
    }
}

impl LociFile {
    pub fn from_json(text: &str) -> Result<LociFile> {
        check_version(text, LOCI_FILE, REPORT_SCHEMA_VERSION)?;
        Ok(serde_json::from_str(text)?)
    }

    pub fn for_dataset(&self, name: &str) -> Option<&DatasetLoci> {
        self.datasets.iter().find(|d| d.dataset == name)
    }

    /// Loci of `name`, or the union over all datasets when `name` is absent.
    pub fn loci_for(&self, name: &str) -> Vec<Locus> {
        let mut out: Vec<Locus> = match self.for_dataset(name) {
            Some(d) => d.loci.iter().map(|l| l.locus).collect(),
            None => self
                .datasets
                .iter()
                .flat_map(|d| d.loci.iter().map(|l| l.locus))
                .collect(),
        };
        out.sort();
        out.dedup();
        out
    }

    /// Top head of `name`, or of the first dataset when `name` is absent.
    pub fn top_head_for(&self, name: &str) -> Option<HeadRef> {
        self.for_dataset(name)
            .or(self.datasets.first())
            .and_then(|d| d.top_heads.first())
            .map(|h| h.head)
    }
}

pub fn dataset_loci(
    weights: &ModelWeights,
    text: &dyn TokenText,
    report: &BiasReport,
    prompts: usize,
    infer: usize,
    eva: usize,
) -> Result<DatasetLoci> {
    let lens = Lens::new(weights, report.sigma);
    let loci = report
        .loci
        .iter()
        .map(|l| {
            let v = weights.value_vector(l.layer, l.dim)?;
            let p = lens.project_source(
                Source::MlpDim {
                    layer: l.layer,
                    dim: l.dim,
                },
                v,
            )?;
            let k = LENS_TOKENS.min(weights.config.vocab_size);
            let top_tokens = top_k_tokens(&p, k, text)?
                .into_iter()
                .map(|t| t.text)
                .collect();
            Ok(LocusEntry {
                locus: l.locus(),
                frequency: l.frequency,
                mean_diff: l.mean_diff,
                contrib: l.contrib,
                detections: l.detections,
                top_tokens,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let anchored = infer + eva;
    Ok(DatasetLoci {
        dataset: report.dataset.clone(),
        prompts,
        anchored,
        infer,
        eva,
        anchored_rate: 100.0 * anchored as f64 / prompts.max(1) as f64,
        argmax_layer: report.argmax_layer(),
        top_heads: report
            .top_heads(3)
            .iter()
            .map(|h| HeadEntry {
                head: h.head_ref(),
                mean_diff: h.mean_diff,
            })
            .collect(),
        loci,
    })
}
