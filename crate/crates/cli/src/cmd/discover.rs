use anchorscope::discovery::{
    average_across_datasets, build_circuit, discover, HeadDiff, MlpLayerDiff, ScanOptions,
    REPORT_SCHEMA_VERSION,
};
use anchorscope::Execution;
use anyhow::Result;

use crate::artifacts::{dataset_loci, LociFile, CIRCUIT_FILE, HEAD_CSV, LOCI_FILE, MLP_CSV};
use crate::config::RunConfig;
use crate::data::{load_context, parse_datasets, prepare};
use crate::output::{num, OutDir};
use crate::render;

pub fn run(cfg: &RunConfig, exec: Execution, heatmap: bool) -> Result<()> {
    let specs = parse_datasets(cfg)?;
    let ctx = load_context(cfg)?;
    let opts = ScanOptions {
        sigma: cfg.sigma,
        top_k: cfg.top_k,
        threshold: cfg.threshold,
        exec,
    };

    let mut out = OutDir::create(&cfg.out)?;
    let mut per_dataset: Vec<(Vec<MlpLayerDiff>, Vec<HeadDiff>)> = Vec::new();
    let mut loci = LociFile {
        schema_version: REPORT_SCHEMA_VERSION,
        model: cfg.model.clone(),
        sigma: cfg.sigma,
        threshold: cfg.threshold,
        top_k: cfg.top_k,
        datasets: Vec::new(),
    };
    for spec in &specs {
        let p = prepare(&ctx, spec, cfg, exec)?;
        let report = discover(
            &ctx.weights,
            &ctx.letters,
            &p.infer,
            &opts,
            &cfg.model,
            &p.name,
        )?;
        out.write_json(&format!("report_{}.json", p.name), &report)?;
        loci.datasets.push(dataset_loci(
            &ctx.weights,
            ctx.codec.as_ref(),
            &report,
            p.total,
            p.infer.len(),
            p.eva.len(),
        )?);
        per_dataset.push((report.mlp, report.heads));
    }

    let (mlp, heads) = average_across_datasets(&per_dataset)?;
    let n_heads = ctx.weights.config.n_heads;
    let mut header = vec!["layer".to_string()];
    header.extend((0..n_heads).map(|h| format!("h{h}")));
    out.write_csv(
        MLP_CSV,
        &["layer".into(), "mlp".into()],
        mlp.iter()
            .map(|m| vec![m.layer.to_string(), num(m.mean_diff)]),
    )?;
    out.write_csv(
        HEAD_CSV,
        &header,
        heads.chunks(n_heads).enumerate().map(|(l, row)| {
            std::iter::once(l.to_string())
                .chain(row.iter().map(|h| num(h.mean_diff)))
                .collect::<Vec<_>>()
        }),
    )?;
    out.write_json(LOCI_FILE, &loci)?;
    out.write_json(CIRCUIT_FILE, &build_circuit(&per_dataset, cfg.threshold))?;
    if heatmap {
        render::heatmaps(&mut out)?;
    }
    render::print_summary(&loci);
    out.commit("discover", cfg)
}
