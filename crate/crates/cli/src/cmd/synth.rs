use anchorscope::datasets::export_jsonl;
use anyhow::Result;

use crate::config::RunConfig;
use crate::data::{load_codec, parse_datasets};
use crate::output::OutDir;

/// Writes each dataset as generic JSONL, re-ingestable with `jsonl:PATH`.
pub fn run(cfg: &RunConfig) -> Result<()> {
    let codec = load_codec(cfg)?;
    let specs = parse_datasets(cfg)?;
    let mut out = OutDir::create(&cfg.out)?;
    for spec in &specs {
        let samples = spec.load(codec.as_ref(), cfg.seed)?;
        let mut buf = Vec::new();
        export_jsonl(&samples, &mut buf)?;
        let name = format!("{}.jsonl", spec.name());
        out.write(&name, &buf)?;
        println!("{name}: {} samples", samples.len());
    }
    out.commit("synth", cfg)
}
