use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::artifacts::{LociFile, HEAD_CSV, MLP_CSV};
use crate::data::read_to_string;
use crate::output::OutDir;
use crate::svg::heatmap;

pub const MLP_SVG: &str = "heatmap_mlp.svg";
pub const HEAD_SVG: &str = "heatmap_heads.svg";

/// A numeric CSV matrix: row labels from the first column, values from the rest.
pub struct Matrix {
    pub cols: Vec<String>,
    pub rows: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = read_to_string(path)?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let cols: Vec<String> = r.headers()?.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{} row {}", path.display(), i + 1))?;
        let mut it = rec.iter();
        rows.push(it.next().unwrap_or_default().to_string());
        let vals = it
            .map(|c| {
                c.parse::<f64>()
                    .with_context(|| format!("{} row {}: bad number `{c}`", path.display(), i + 1))
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != cols.len() {
            bail!(
                "{} row {} has {} values, expected {}",
                path.display(),
                i + 1,
                vals.len(),
                cols.len()
            );
        }
        values.push(vals);
    }
    Ok(Matrix { cols, rows, values })
}

/// Renders both heatmaps from the CSVs already in `out`.
pub fn heatmaps(out: &mut OutDir) -> Result<()> {
    let mlp = read_matrix(&out.path().join(MLP_CSV))?;
    let heads = read_matrix(&out.path().join(HEAD_CSV))?;
    let mlp_svg = heatmap(
        "MLP logit difference (A - gold)",
        &mlp.rows,
        &mlp.cols,
        &mlp.values,
    );
    let head_svg = heatmap(
        "Attention head logit difference (A - gold)",
        &heads.rows,
        &heads.cols,
        &heads.values,
    );
    out.write(MLP_SVG, mlp_svg.as_bytes())?;
    out.write(HEAD_SVG, head_svg.as_bytes())?;
    Ok(())
}

pub fn print_summary(loci: &LociFile) {
    println!(
        "model {}  threshold {}  top-k {}",
        loci.model, loci.threshold, loci.top_k
    );
    for d in &loci.datasets {
        println!(
            "\n[{}] {} prompts, {} anchored ({:.1}%), {} infer / {} eva",
            d.dataset, d.prompts, d.anchored, d.anchored_rate, d.infer, d.eva
        );
        match d.argmax_layer {
            Some(l) => println!("  argmax MLP layer: {l}"),
            None => println!("  argmax MLP layer: none"),
        }
        for h in &d.top_heads {
            println!("  head {:<8} {:>8.3}", h.head.to_string(), h.mean_diff);
        }
        if d.loci.is_empty() {
            println!("  no value vectors above threshold");
        }
        for l in &d.loci {
            println!(
                "  locus {:<12} freq {:>5.1}%  diff {:>7.3}  tokens {:?}",
                l.locus.to_string(),
                l.frequency,
                l.mean_diff,
                l.top_tokens
            );
        }
    }
}
