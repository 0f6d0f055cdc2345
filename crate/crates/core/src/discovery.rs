//! Localization of the anchored bias: per-layer MLP and per-head logit
//! differences, dominant value vectors, and the thresholded circuit.
//!
//! Every sample is run once at final-position capture; all scans read from
//! the resulting [`SampleScan`]s, so a dataset costs one forward per sample.

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::datasets::McqSample;
use crate::error::{Error, Result};
use crate::eval::{classify, ArgmaxDomain, Prediction};
use crate::lens::{Lens, Sigma};
use crate::letter::{Letter, LetterSet};
use crate::mitigation::{HeadRef, Locus};
use crate::model::{forward, ActivationTrace, CaptureLevel, ModelWeights};
use crate::par::{self, Execution};

pub const DEFAULT_THRESHOLD: f32 = 4.0;
pub const DEFAULT_TOP_K: usize = 10;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub sigma: Sigma,
    pub top_k: usize,
    pub threshold: f32,
    pub exec: Execution,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            sigma: Sigma::LearnedLn,
            top_k: DEFAULT_TOP_K,
            threshold: DEFAULT_THRESHOLD,
            exec: Execution::Parallel,
        }
    }
}

/// `|k_T^{l,n}| * ||v^{l,n}||` for one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimContribution {
    pub dim: usize,
    pub contrib: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimScore {
    pub dim: usize,
    pub contrib: f32,
    /// Lens difference `A - gold` of `k_T^{l,n} v^{l,n}`.
    pub diff: f32,
}

/// Everything discovery needs from one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScan {
    pub id: String,
    pub gold: Letter,
    /// Lens difference of `m_T^l` per layer.
    pub mlp_diff: Vec<f32>,
    /// Lens difference of `r_T^{l,h}`, `[layer][head]`.
    pub head_diff: Vec<Vec<f32>>,
    /// Top-k dimensions by contribution, per layer.
    pub dominant: Vec<Vec<DimScore>>,
}

/// `||v^{l,n}||` for every layer and dimension.
#[derive(Debug, Clone)]
pub struct ValueNorms(Vec<Array1<f32>>);

impl ValueNorms {
    pub fn new(weights: &ModelWeights) -> Self {
        ValueNorms(
            weights
                .blocks
                .iter()
                .map(|b| {
                    b.w_out
                        .rows()
                        .into_iter()
                        .map(|r| r.dot(&r).sqrt())
                        .collect()
                })
                .collect(),
        )
    }

    pub fn layer(&self, l: usize) -> &Array1<f32> {
        &self.0[l]
    }
}

fn top_contributions(coeffs: &Array1<f32>, norms: &Array1<f32>, k: usize) -> Vec<DimContribution> {
    let mut all: Vec<DimContribution> = coeffs
        .iter()
        .zip(norms)
        .enumerate()
        .map(|(dim, (c, n))| DimContribution {
            dim,
            contrib: c.abs() * n,
        })
        .collect();
    let cmp = |a: &DimContribution, b: &DimContribution| {
        b.contrib.total_cmp(&a.contrib).then(a.dim.cmp(&b.dim))
    };
    let k = k.min(all.len());
    if k == 0 {
        return Vec::new();
    }
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, cmp);
        all.truncate(k);
    }
    all.sort_by(cmp);
    all
}

/// The `k` dimensions of layer `layer` with the largest contribution at the
/// final position, descending, ties by ascending dimension.
pub fn dominant_dimensions(
    weights: &ModelWeights,
    trace: &ActivationTrace,
    layer: usize,
    k: usize,
) -> Result<Vec<DimContribution>> {
    trace.require(CaptureLevel::FinalPosition)?;
    let block = weights
        .blocks
        .get(layer)
        .ok_or_else(|| Error::InvalidArgument(format!("layer {layer} out of range")))?;
    let norms: Array1<f32> = block
        .w_out
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .collect();
    Ok(top_contributions(&trace.mlp_coeffs[layer], &norms, k))
}

/// Runs one sample and records every per-layer and per-head difference
/// between the `A` logit and the gold logit.
pub fn scan_sample(
    lens: &Lens<'_>,
    norms: &ValueNorms,
    letters: &LetterSet,
    sample: &McqSample,
    top_k: usize,
) -> Result<SampleScan> {
    if sample.gold == Letter::A {
        return Err(Error::GoldIsAnchor(sample.id.clone()));
    }
    let w = lens.weights();
    let (a, g) = (letters.anchor(), letters.id(sample.gold));
    let (_, trace) = forward(w, &sample.tokens, CaptureLevel::FinalPosition, &[])?;
    let n_layers = w.config.n_layers;
    let mut mlp_diff = Vec::with_capacity(n_layers);
    let mut head_diff = Vec::with_capacity(n_layers);
    let mut dominant = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        mlp_diff.push(lens.diff(trace.mlp_out[l].view(), a, g)?);
        head_diff.push(
            trace.head_out[l]
                .rows()
                .into_iter()
                .map(|r| lens.diff(r, a, g))
                .collect::<Result<Vec<_>>>()?,
        );
        let coeffs = &trace.mlp_coeffs[l];
        dominant.push(
            top_contributions(coeffs, norms.layer(l), top_k)
                .into_iter()
                .map(|c| {
                    let kv = &w.blocks[l].w_out.row(c.dim) * coeffs[c.dim];
                    Ok(DimScore {
                        dim: c.dim,
                        contrib: c.contrib,
                        diff: lens.diff(kv.view(), a, g)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(SampleScan {
        id: sample.id.clone(),
        gold: sample.gold,
        mlp_diff,
        head_diff,
        dominant,
    })
}

pub fn scan_samples(
    weights: &ModelWeights,
    letters: &LetterSet,
    samples: &[McqSample],
    opts: &ScanOptions,
) -> Result<Vec<SampleScan>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if opts.top_k == 0 {
        return Err(Error::InvalidArgument("top-k must be at least 1".into()));
    }
    let lens = Lens::new(weights, opts.sigma);
    let norms = ValueNorms::new(weights);
    par::try_map(samples, opts.exec, |s| {
        scan_sample(&lens, &norms, letters, s, opts.top_k)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpLayerDiff {
    pub layer: usize,
    pub mean_diff: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadDiff {
    pub layer: usize,
    pub head: usize,
    pub mean_diff: f64,
    pub samples: usize,
}

impl HeadDiff {
    pub fn head_ref(&self) -> HeadRef {
        HeadRef {
            layer: self.layer,
            head: self.head,
        }
    }
}

fn check_scans(scans: &[SampleScan]) -> Result<()> {
    if scans.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(())
}

/// Mean MLP difference per layer.
pub fn mlp_layer_scan(scans: &[SampleScan]) -> Result<Vec<MlpLayerDiff>> {
    check_scans(scans)?;
    let n = scans.len();
    Ok((0..scans[0].mlp_diff.len())
        .map(|l| MlpLayerDiff {
            layer: l,
            mean_diff: scans.iter().map(|s| s.mlp_diff[l] as f64).sum::<f64>() / n as f64,
            samples: n,
        })
        .collect())
}

/// Mean head difference per `(layer, head)`, layer-major.
pub fn head_scan(scans: &[SampleScan]) -> Result<Vec<HeadDiff>> {
    check_scans(scans)?;
    let n = scans.len();
    let mut out = Vec::new();
    for (l, heads) in scans[0].head_diff.iter().enumerate() {
        for h in 0..heads.len() {
            out.push(HeadDiff {
                layer: l,
                head: h,
                mean_diff: scans.iter().map(|s| s.head_diff[l][h] as f64).sum::<f64>() / n as f64,
                samples: n,
            });
        }
    }
    Ok(out)
}

/// Heads by descending mean difference, ties by ascending `(layer, head)`.
pub fn ranked_heads(heads: &[HeadDiff]) -> Vec<HeadDiff> {
    let mut v = heads.to_vec();
    v.sort_by(|a, b| {
        b.mean_diff
            .total_cmp(&a.mean_diff)
            .then((a.layer, a.head).cmp(&(b.layer, b.head)))
    });
    v
}

/// The argmax layer plus every layer whose mean difference exceeds `threshold`.
pub fn scan_layers(mlp: &[MlpLayerDiff], threshold: f32) -> Vec<usize> {
    let Some(best) = mlp
        .iter()
        .reduce(|a, b| if b.mean_diff > a.mean_diff { b } else { a })
    else {
        return Vec::new();
    };
    let mut layers: Vec<usize> = mlp
        .iter()
        .filter(|m| m.mean_diff > threshold as f64)
        .map(|m| m.layer)
        .collect();
    layers.push(best.layer);
    layers.sort_unstable();
    layers.dedup();
    layers
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueVectorLocus {
    pub layer: usize,
    pub dim: usize,
    /// Mean contribution over the samples where the locus was selected.
    pub contrib: f64,
    /// Mean lens difference over the samples where the locus was selected.
    pub mean_diff: f64,
    pub detections: usize,
    /// Percentage of samples where the locus was among the top-k dominant
    /// dimensions with a difference above the threshold.
    pub frequency: f64,
}

impl ValueVectorLocus {
    pub fn locus(&self) -> Locus {
        Locus {
            layer: self.layer,
            dim: self.dim,
        }
    }
}

/// Dominant dimensions of `layers` whose per-sample difference exceeds
/// `threshold` in at least one sample. Sorted by frequency, then mean
/// difference, descending; ties by `(layer, dim)`.
pub fn select_bias_vectors(
    scans: &[SampleScan],
    layers: &[usize],
    threshold: f32,
) -> Vec<ValueVectorLocus> {
    let mut acc: BTreeMap<(usize, usize), (usize, f64, f64)> = BTreeMap::new();
    for s in scans {
        for &l in layers {
            for d in s.dominant.get(l).into_iter().flatten() {
                if d.diff > threshold {
                    let e = acc.entry((l, d.dim)).or_insert((0, 0.0, 0.0));
                    e.0 += 1;
                    e.1 += d.contrib as f64;
                    e.2 += d.diff as f64;
                }
            }
        }
    }
    let n = scans.len().max(1) as f64;
    let mut out: Vec<ValueVectorLocus> = acc
        .into_iter()
        .map(|((layer, dim), (count, c, d))| ValueVectorLocus {
            layer,
            dim,
            contrib: c / count as f64,
            mean_diff: d / count as f64,
            detections: count,
            frequency: 100.0 * count as f64 / n,
        })
        .collect();
    out.sort_by(|a, b| {
        b.detections
            .cmp(&a.detections)
            .then(b.mean_diff.total_cmp(&a.mean_diff))
            .then((a.layer, a.dim).cmp(&(b.layer, b.dim)))
    });
    out
}

/// `A^{l,h}[query, key]` from a trace.
pub fn attention_weight_at(
    trace: &ActivationTrace,
    layer: usize,
    head: usize,
    query: usize,
    key: usize,
) -> Result<f32> {
    trace.attention_weight_at(layer, head, query, key)
}

/// Samples whose unedited prediction is `A` while the gold letter is not.
pub fn anchored_subset(
    weights: &ModelWeights,
    letters: &LetterSet,
    samples: &[McqSample],
    domain: ArgmaxDomain,
    exec: Execution,
) -> Result<Vec<McqSample>> {
    let keep = par::try_map(samples, exec, |s| {
        if s.gold == Letter::A {
            return Ok(false);
        }
        Ok::<_, Error>(
            classify(weights, s.unlabeled(), letters, &[], domain)?
                == Prediction::Letter(Letter::A),
        )
    })?;
    Ok(samples
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(s, _)| s.clone())
        .collect())
}

/// Discovery output for one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub schema_version: u32,
    pub model: String,
    pub dataset: String,
    pub sigma: Sigma,
    pub threshold: f32,
    pub top_k: usize,
    pub samples: usize,
    pub mlp: Vec<MlpLayerDiff>,
    pub heads: Vec<HeadDiff>,
    pub scanned_layers: Vec<usize>,
    pub loci: Vec<ValueVectorLocus>,
}

impl BiasReport {
    pub fn from_json(text: &str) -> Result<BiasReport> {
        let version: serde_json::Value = serde_json::from_str(text)?;
        let found = version
            .get("schema_version")
            .and_then(|v| v.as_u64())
            .unwrap_or(0) as u32;
        if found != REPORT_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found,
                expected: REPORT_SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_str(text)?)
    }

    pub fn argmax_layer(&self) -> Option<usize> {
        self.mlp
            .iter()
            .reduce(|a, b| if b.mean_diff > a.mean_diff { b } else { a })
            .map(|m| m.layer)
    }

    pub fn top_heads(&self, n: usize) -> Vec<HeadDiff> {
        ranked_heads(&self.heads).into_iter().take(n).collect()
    }
}

/// Scans `samples` (which should already be the anchored subset) and
/// assembles the report.
pub fn discover(
    weights: &ModelWeights,
    letters: &LetterSet,
    samples: &[McqSample],
    opts: &ScanOptions,
    model: &str,
    dataset: &str,
) -> Result<BiasReport> {
    let scans = scan_samples(weights, letters, samples, opts)?;
    report_from_scans(&scans, opts, model, dataset)
}

pub fn report_from_scans(
    scans: &[SampleScan],
    opts: &ScanOptions,
    model: &str,
    dataset: &str,
) -> Result<BiasReport> {
    let mlp = mlp_layer_scan(scans)?;
    let heads = head_scan(scans)?;
    let scanned_layers = scan_layers(&mlp, opts.threshold);
    let loci = select_bias_vectors(scans, &scanned_layers, opts.threshold);
    Ok(BiasReport {
        schema_version: REPORT_SCHEMA_VERSION,
        model: model.to_string(),
        dataset: dataset.to_string(),
        sigma: opts.sigma,
        threshold: opts.threshold,
        top_k: opts.top_k,
        samples: scans.len(),
        mlp,
        heads,
        scanned_layers,
        loci,
    })
}

/// Per-dataset scans averaged with equal weight per dataset.
pub fn average_across_datasets(
    scans: &[(Vec<MlpLayerDiff>, Vec<HeadDiff>)],
) -> Result<(Vec<MlpLayerDiff>, Vec<HeadDiff>)> {
    let Some((m0, h0)) = scans.first() else {
        return Err(Error::EmptySamples);
    };
    let n = scans.len() as f64;
    let mlp = m0
        .iter()
        .enumerate()
        .map(|(i, m)| MlpLayerDiff {
            layer: m.layer,
            mean_diff: scans.iter().map(|(ms, _)| ms[i].mean_diff).sum::<f64>() / n,
            samples: scans.iter().map(|(ms, _)| ms[i].samples).sum(),
        })
        .collect();
    let heads = h0
        .iter()
        .enumerate()
        .map(|(i, h)| HeadDiff {
            layer: h.layer,
            head: h.head,
            mean_diff: scans.iter().map(|(_, hs)| hs[i].mean_diff).sum::<f64>() / n,
            samples: scans.iter().map(|(_, hs)| hs[i].samples).sum(),
        })
        .collect();
    Ok((mlp, heads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NodeKind {
    Mlp { layer: usize },
    Head { layer: usize, head: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitNode {
    pub node: NodeKind,
    /// Largest mean difference over datasets.
    pub score: f64,
    /// Percentage of datasets in which the node exceeds the threshold.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCircuit {
    pub schema_version: u32,
    pub threshold: f32,
    pub datasets: usize,
    pub nodes: Vec<CircuitNode>,
}

/// Nodes whose mean difference exceeds `threshold` in at least one dataset.
pub fn build_circuit(scans: &[(Vec<MlpLayerDiff>, Vec<HeadDiff>)], threshold: f32) -> BiasCircuit {
    let mut acc: BTreeMap<NodeKind, (f64, usize)> = BTreeMap::new();
    let t = threshold as f64;
    for (mlp, heads) in scans {
        let nodes = mlp
            .iter()
            .map(|m| (NodeKind::Mlp { layer: m.layer }, m.mean_diff))
            .chain(heads.iter().map(|h| {
                (
                    NodeKind::Head {
                        layer: h.layer,
                        head: h.head,
                    },
                    h.mean_diff,
                )
            }));
        for (node, score) in nodes {
            if score > t {
                let e = acc.entry(node).or_insert((f64::NEG_INFINITY, 0));
                e.0 = e.0.max(score);
                e.1 += 1;
            }
        }
    }
    let n = scans.len().max(1) as f64;
    BiasCircuit {
        schema_version: REPORT_SCHEMA_VERSION,
        threshold,
        datasets: scans.len(),
        nodes: acc
            .into_iter()
            .map(|(node, (score, count))| CircuitNode {
                node,
                score,
                probability: 100.0 * count as f64 / n,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::Codec;
    use crate::toyforge::{build_toy, toy_samples, PlantedMlp, ToySpec};
    use proptest::prelude::*;

    fn letters() -> LetterSet {
        crate::toyforge::ToyVocab.letter_set(true).unwrap()
    }

    #[test]
    fn planted_default_toy_is_recovered() {
        let toy = build_toy(&ToySpec::default()).unwrap();
        let samples = toy_samples(20, 4, 3).unwrap();
        let r = discover(
            &toy.weights,
            &letters(),
            &samples,
            &ScanOptions::default(),
            "toy",
            "toy",
        )
        .unwrap();
        assert_eq!(r.argmax_layer(), Some(2));
        assert_eq!(r.top_heads(1)[0].head_ref(), HeadRef { layer: 1, head: 1 });
        assert_eq!(r.loci.len(), 1);
        assert_eq!(r.loci[0].locus(), Locus { layer: 2, dim: 5 });
        assert_eq!(r.loci[0].frequency, 100.0);
        for m in &r.mlp {
            if m.layer != 2 {
                assert!(m.mean_diff.abs() < 1e-4);
            }
        }
    }

    #[test]
    fn zero_strength_selects_nothing() {
        let spec = ToySpec {
            planted_mlp: Some(PlantedMlp {
                layer: 1,
                dim: 3,
                strength: 0.0,
            }),
            planted_head: None,
            ..ToySpec::default()
        };
        let toy = build_toy(&spec).unwrap();
        let samples = toy_samples(10, 3, 0).unwrap();
        let r = discover(
            &toy.weights,
            &letters(),
            &samples,
            &ScanOptions::default(),
            "toy",
            "toy",
        )
        .unwrap();
        assert!(r.loci.is_empty());
        assert!(build_circuit(&[(r.mlp, r.heads)], 4.0).nodes.is_empty());
    }

    #[test]
    fn infinite_threshold_and_empty_inputs() {
        let toy = build_toy(&ToySpec::default()).unwrap();
        let samples = toy_samples(5, 3, 0).unwrap();
        let scans =
            scan_samples(&toy.weights, &letters(), &samples, &ScanOptions::default()).unwrap();
        assert!(select_bias_vectors(&scans, &[0, 1, 2], f32::INFINITY).is_empty());
        assert!(matches!(mlp_layer_scan(&[]), Err(Error::EmptySamples)));
        assert!(build_circuit(&[], 4.0).nodes.is_empty());
        let mut bad = samples[0].clone();
        bad.gold = Letter::A;
        assert!(matches!(
            scan_samples(&toy.weights, &letters(), &[bad], &ScanOptions::default()),
            Err(Error::GoldIsAnchor(_))
        ));
    }

    #[test]
    fn dominant_dimensions_match_brute_force() {
        let toy = build_toy(&ToySpec::random(8)).unwrap();
        let s = &toy_samples(1, 4, 8).unwrap()[0];
        let (_, trace) =
            forward(&toy.weights, &s.tokens, CaptureLevel::FinalPosition, &[]).unwrap();
        for l in 0..toy.weights.config.n_layers {
            let got = dominant_dimensions(&toy.weights, &trace, l, 10).unwrap();
            let mut brute: Vec<(f32, usize)> = (0..toy.weights.config.d_mlp)
                .map(|n| {
                    let v = toy.weights.value_vector(l, n).unwrap();
                    (
                        (trace.mlp_coeffs[l][n] * &v).mapv(|x| x * x).sum().sqrt(),
                        n,
                    )
                })
                .collect();
            brute.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let want: Vec<usize> = brute.iter().take(10).map(|x| x.1).collect();
            let got_dims: Vec<usize> = got.iter().map(|c| c.dim).collect();
            assert_eq!(got_dims, want);
            assert!(got.iter().all(|c| c.contrib >= 0.0));
        }
        let none = forward(&toy.weights, &s.tokens, CaptureLevel::None, &[])
            .unwrap()
            .1;
        assert!(matches!(
            dominant_dimensions(&toy.weights, &none, 0, 10),
            Err(Error::CaptureInsufficient { .. })
        ));
    }

    #[test]
    fn scans_agree_across_execution_modes() {
        let toy = build_toy(&ToySpec::random(2)).unwrap();
        let samples = toy_samples(16, 5, 2).unwrap();
        let seq = ScanOptions {
            exec: Execution::Sequential,
            ..ScanOptions::default()
        };
        let a = scan_samples(&toy.weights, &letters(), &samples, &seq).unwrap();
        let b = scan_samples(&toy.weights, &letters(), &samples, &ScanOptions::default()).unwrap();
        assert_eq!(a, b);
        let mut rev = samples.clone();
        rev.reverse();
        let c = scan_samples(&toy.weights, &letters(), &rev, &seq).unwrap();
        let (ma, mc) = (mlp_layer_scan(&a).unwrap(), mlp_layer_scan(&c).unwrap());
        for (x, y) in ma.iter().zip(&mc) {
            assert!((x.mean_diff - y.mean_diff).abs() < 1e-6);
        }
    }

    #[test]
    fn report_json_checks_version() {
        let toy = build_toy(&ToySpec::default()).unwrap();
        let samples = toy_samples(4, 3, 0).unwrap();
        let r = discover(
            &toy.weights,
            &letters(),
            &samples,
            &ScanOptions::default(),
            "toy",
            "toy",
        )
        .unwrap();
        let text = serde_json::to_string(&r).unwrap();
        assert_eq!(BiasReport::from_json(&text).unwrap(), r);
        let old = text.replace("\"schema_version\":1", "\"schema_version\":7");
        assert!(matches!(
            BiasReport::from_json(&old),
            Err(Error::SchemaVersion { found: 7, .. })
        ));
    }

    fn arb_scans() -> impl Strategy<Value = Vec<(Vec<MlpLayerDiff>, Vec<HeadDiff>)>> {
        prop::collection::vec(
            (
                prop::collection::vec(-10.0f64..10.0, 3),
                prop::collection::vec(-10.0f64..10.0, 6),
            ),
            0..5,
        )
        .prop_map(|ds| {
            ds.into_iter()
                .map(|(m, h)| {
                    let mlp = m
                        .into_iter()
                        .enumerate()
                        .map(|(layer, mean_diff)| MlpLayerDiff {
                            layer,
                            mean_diff,
                            samples: 1,
                        })
                        .collect();
                    let heads = h
                        .into_iter()
                        .enumerate()
                        .map(|(i, mean_diff)| HeadDiff {
                            layer: i / 2,
                            head: i % 2,
                            mean_diff,
                            samples: 1,
                        })
                        .collect();
                    (mlp, heads)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn circuit_nodes_exceed_threshold_and_shrink_monotonically(
            scans in arb_scans(), t1 in -5.0f32..8.0, dt in 0.0f32..5.0,
        ) {
            let lo = build_circuit(&scans, t1);
            let hi = build_circuit(&scans, t1 + dt);
            for n in &lo.nodes {
                prop_assert!(n.score > t1 as f64);
                prop_assert!(n.probability > 0.0 && n.probability <= 100.0);
            }
            for n in &hi.nodes {
                prop_assert!(lo.nodes.iter().any(|m| m.node == n.node));
            }
        }
    }
}
