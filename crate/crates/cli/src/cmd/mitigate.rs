use anchorscope::eval::{
    accuracy, lambda_sweep, EvalMeta, EvalOptions, EvalResult, Mitigation, Split,
};
use anchorscope::mitigation::{HeadRef, Locus};
use anchorscope::model::SwapMode;
use anchorscope::Execution;
use anyhow::{bail, Result};

use crate::artifacts::{LociFile, LOCI_FILE, RESULTS_FILE};
use crate::config::{Mode, RunConfig};
use crate::data::{load_context, parse_datasets, prepare, read_to_string};
use crate::output::{num, OutDir};

/// Loci and heads from flags, falling back to an earlier discover run.
struct Targets {
    loci: Vec<Locus>,
    heads: Vec<HeadRef>,
    from: Option<LociFile>,
}

impl Targets {
    fn resolve(cfg: &RunConfig) -> Result<Targets> {
        let loci = cfg
            .loci
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<Locus>, _>>()?;
        let heads = cfg
            .heads
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<HeadRef>, _>>()?;
        let from = match &cfg.from {
            Some(dir) => Some(LociFile::from_json(&read_to_string(&dir.join(LOCI_FILE))?)?),
            None => None,
        };
        Ok(Targets { loci, heads, from })
    }

    fn loci_for(&self, dataset: &str) -> Result<Vec<Locus>> {
        if !self.loci.is_empty() {
            return Ok(self.loci.clone());
        }
        let found = self
            .from
            .as_ref()
            .map(|f| f.loci_for(dataset))
            .unwrap_or_default();
        if found.is_empty() {
            bail!("no loci for `{dataset}`: pass --locus LAYER:DIM or --from a discover run that found some");
        }
        Ok(found)
    }

    fn heads_for(&self, dataset: &str) -> Result<Vec<HeadRef>> {
        if !self.heads.is_empty() {
            return Ok(self.heads.clone());
        }
        match self.from.as_ref().and_then(|f| f.top_head_for(dataset)) {
            Some(h) => Ok(vec![h]),
            None => bail!(
                "no head for `{dataset}`: pass --head L<layer>H<head> or --from a discover run"
            ),
        }
    }
}

pub fn run(cfg: &RunConfig, exec: Execution) -> Result<()> {
    let specs = parse_datasets(cfg)?;
    let targets = Targets::resolve(cfg)?;
    let ctx = load_context(cfg)?;
    let opts = EvalOptions {
        domain: cfg.argmax_domain,
        exec,
    };

    let mut out = OutDir::create(&cfg.out)?;
    let mut results: Vec<EvalResult> = Vec::new();
    for spec in &specs {
        let p = prepare(&ctx, spec, cfg, exec)?;
        let meta = EvalMeta {
            dataset: p.name.clone(),
            model: cfg.model.clone(),
        };
        for (split, samples) in [(Split::Infer, &p.infer), (Split::Eva, &p.eva)] {
            results.push(accuracy(
                &ctx.weights,
                samples,
                &ctx.letters,
                &Mitigation::None,
                split,
                opts,
                &meta,
            )?);
            match cfg.mode {
                Mode::Edit => {
                    let loci = targets.loci_for(&p.name)?;
                    results.extend(lambda_sweep(
                        &ctx.weights,
                        &loci,
                        samples,
                        &ctx.letters,
                        cfg.lambda1,
                        &cfg.lambda2,
                        split,
                        opts,
                        &meta,
                    )?);
                }
                Mode::Swap | Mode::SwapLiteral => {
                    let mode = if cfg.mode == Mode::Swap {
                        SwapMode::Pattern
                    } else {
                        SwapMode::Literal
                    };
                    let m = Mitigation::Swap {
                        heads: targets.heads_for(&p.name)?,
                        mode,
                    };
                    results.push(accuracy(
                        &ctx.weights,
                        samples,
                        &ctx.letters,
                        &m,
                        split,
                        opts,
                        &meta,
                    )?);
                }
            }
        }
    }

    out.write_csv(
        "accuracy.csv",
        &[
            "dataset",
            "split",
            "condition",
            "samples",
            "accuracy",
            "anchored_rate",
            "other_rate",
        ]
        .map(String::from),
        results.iter().map(|r| {
            vec![
                r.dataset.clone(),
                r.split.to_string(),
                r.condition.to_string(),
                r.samples.to_string(),
                num(r.accuracy),
                num(r.anchored_rate),
                num(r.other_rate),
            ]
        }),
    )?;
    out.write_json(RESULTS_FILE, &results)?;
    for r in &results {
        println!(
            "{:<20} {:<6} {:<36} {:>6.2}%",
            r.dataset,
            r.split.to_string(),
            r.condition.to_string(),
            r.accuracy
        );
    }
    out.commit("mitigate", cfg)
}
