use anchorscope::datasets::{
    split, synth_original_greater, synth_original_ioi, GreaterConfig, SplitSpec,
};
use anchorscope::eval::{
    accuracy, damage_eval, few_shot_eval, EvalMeta, EvalOptions, EvalResult, Mitigation, Split,
};
use anchorscope::mitigation::{plan_edits, Locus};
use anchorscope::Execution;
use anyhow::{bail, Result};

use crate::artifacts::RESULTS_FILE;
use crate::config::RunConfig;
use crate::data::{load_context, parse_datasets, RunContext};
use crate::output::{num, OutDir};

pub const DAMAGE_COUNT: usize = 200;

/// Original-task accuracy before and after a persistent edit of `loci`.
fn damage(
    ctx: &RunContext,
    cfg: &RunConfig,
    loci: &[Locus],
    exec: Execution,
) -> Result<Vec<(String, f64, f64)>> {
    if cfg.is_toy() {
        bail!(
            "damage checks need the GPT-2 tokenizer; the toy vocabulary has no IOI or year tokens"
        );
    }
    let plan = plan_edits(loci, cfg.target, &ctx.letters, cfg.lambda1, cfg.lambda2[0])?;
    let edited = plan.apply_persistent(&ctx.weights)?;
    let codec = ctx.codec.as_ref();
    let tasks = [
        (
            "original-ioi",
            synth_original_ioi(codec, DAMAGE_COUNT, cfg.seed)?,
        ),
        (
            "original-greater",
            synth_original_greater(codec, DAMAGE_COUNT, cfg.seed, &GreaterConfig::default())?,
        ),
    ];
    let mut rows = Vec::new();
    for (name, samples) in tasks {
        if samples.is_empty() {
            log::warn!("{name}: no usable prompts for this tokenizer, skipped");
            continue;
        }
        let before = damage_eval(&ctx.weights, &samples, exec)?;
        let after = damage_eval(&edited, &samples, exec)?;
        rows.push((name.to_string(), before, after));
    }
    Ok(rows)
}

pub fn run(cfg: &RunConfig, exec: Execution) -> Result<()> {
    let specs = parse_datasets(cfg)?;
    let loci = cfg
        .loci
        .iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<Locus>, _>>()?;
    let ctx = load_context(cfg)?;
    let opts = EvalOptions {
        domain: cfg.argmax_domain,
        exec,
    };

    let mut out = OutDir::create(&cfg.out)?;
    let mut results: Vec<EvalResult> = Vec::new();
    for spec in &specs {
        let meta = EvalMeta {
            dataset: spec.name(),
            model: cfg.model.clone(),
        };
        let samples = spec.load(ctx.codec.as_ref(), cfg.seed)?;
        if cfg.k_shot == 0 {
            results.push(accuracy(
                &ctx.weights,
                &samples,
                &ctx.letters,
                &Mitigation::None,
                Split::All,
                opts,
                &meta,
            )?);
            continue;
        }
        // exemplars never come from the evaluated prompts
        let (eval_set, pool) = if spec.is_synthetic() {
            let mut pool = spec.load(ctx.codec.as_ref(), cfg.seed.wrapping_add(1))?;
            for s in &mut pool {
                s.id = format!("pool-{}", s.id);
            }
            (samples, pool)
        } else {
            let (infer, eva) = split(&samples, &SplitSpec::new(cfg.seed))?;
            (eva, infer)
        };
        results.push(few_shot_eval(
            &ctx.weights,
            ctx.codec.as_ref(),
            &eval_set,
            &pool,
            cfg.k_shot,
            cfg.seed,
            opts,
            &meta,
        )?);
    }

    out.write_csv(
        "eval.csv",
        &[
            "dataset",
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
            "{:<20} {:<12} accuracy {:>6.2}%  anchored {:>6.2}%",
            r.dataset,
            r.condition.to_string(),
            r.accuracy,
            r.anchored_rate
        );
    }

    if !loci.is_empty() {
        let rows = damage(&ctx, cfg, &loci, exec)?;
        out.write_csv(
            "damage.csv",
            &["task", "unedited", "edited"].map(String::from),
            rows.iter()
                .map(|(t, b, a)| vec![t.clone(), num(*b), num(*a)]),
        )?;
        for (t, b, a) in &rows {
            println!("{t:<20} unedited {b:>6.2}%  edited {a:>6.2}%");
        }
    }
    out.commit("eval", cfg)
}
