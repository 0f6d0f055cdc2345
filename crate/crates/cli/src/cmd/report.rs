use std::path::PathBuf;

use anchorscope::discovery::{BiasCircuit, NodeKind, REPORT_SCHEMA_VERSION};
use anchorscope::eval::{EvalResult, RESULT_SCHEMA_VERSION};
use anyhow::{bail, Result};
use clap::Args;

use crate::artifacts::{
    check_version, LociFile, CIRCUIT_FILE, HEAD_CSV, LOCI_FILE, MLP_CSV, RESULTS_FILE,
};
use crate::data::read_to_string;
use crate::output::OutDir;
use crate::render::{heatmaps, print_summary};

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directory of a `discover`, `mitigate` or `eval` run.
    pub run_dir: PathBuf,
}

fn print_results(results: &[EvalResult]) {
    println!(
        "\n{:<20} {:<6} {:<34} {:>7} {:>9} {:>9}",
        "dataset", "split", "condition", "n", "accuracy", "anchored"
    );
    for r in results {
        println!(
            "{:<20} {:<6} {:<34} {:>7} {:>8.2}% {:>8.2}%",
            r.dataset,
            r.split.to_string(),
            r.condition.to_string(),
            r.samples,
            r.accuracy,
            r.anchored_rate
        );
    }
}

fn print_circuit(c: &BiasCircuit) {
    println!(
        "\ncircuit over {} dataset(s) at threshold {}:",
        c.datasets, c.threshold
    );
    for n in &c.nodes {
        let name = match n.node {
            NodeKind::Mlp { layer } => format!("MLP{layer}"),
            NodeKind::Head { layer, head } => format!("L{layer}H{head}"),
        };
        println!(
            "  {name:<8} score {:>7.3}  in {:>5.1}% of datasets",
            n.score, n.probability
        );
    }
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let dir = &args.run_dir;
    if !dir.is_dir() {
        bail!("run directory {} does not exist", dir.display());
    }
    let has = |f: &str| dir.join(f).is_file();
    if !has(MLP_CSV) && !has(RESULTS_FILE) {
        bail!(
            "missing file {} (nothing to report)",
            dir.join(MLP_CSV).display()
        );
    }

    if has(MLP_CSV) || has(LOCI_FILE) {
        let loci_text = read_to_string(&dir.join(LOCI_FILE))?;
        let loci = LociFile::from_json(&loci_text)?;
        if !has(HEAD_CSV) {
            bail!("missing file {}", dir.join(HEAD_CSV).display());
        }
        let mut out = OutDir::create(dir)?;
        heatmaps(&mut out)?;
        out.keep();
        print_summary(&loci);
        if has(CIRCUIT_FILE) {
            let text = read_to_string(&dir.join(CIRCUIT_FILE))?;
            check_version(&text, CIRCUIT_FILE, REPORT_SCHEMA_VERSION)?;
            print_circuit(&serde_json::from_str(&text)?);
        }
    }
    if has(RESULTS_FILE) {
        let text = read_to_string(&dir.join(RESULTS_FILE))?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        for item in value.as_array().into_iter().flatten() {
            check_version(&item.to_string(), RESULTS_FILE, RESULT_SCHEMA_VERSION)?;
        }
        let results: Vec<EvalResult> = serde_json::from_value(value)?;
        print_results(&results);
    }
    Ok(())
}
