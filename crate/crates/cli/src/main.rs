//! `anchorscope`: locate, mitigate and measure the anchored "A" bias of GPT-2 models.

mod artifacts;
mod cmd;
mod config;
mod data;
mod output;
mod render;
mod svg;

use anchorscope::Execution;
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::RunArgs;

#[derive(Debug, Parser)]
#[command(name = "anchorscope", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Download a GPT-2 checkpoint and tokenizer into $ANCHORSCOPE_CACHE.
    Fetch(cmd::fetch::FetchArgs),
    /// Write synthetic datasets as JSONL.
    Synth(RunArgs),
    /// Scan anchored prompts for biased layers, heads and value vectors.
    Discover {
        #[command(flatten)]
        run: RunArgs,
        /// Also render SVG heatmaps.
        #[arg(long)]
        heatmap: bool,
    },
    /// Accuracy on the anchored subset before and after an edit or swap.
    Mitigate(RunArgs),
    /// Baseline or few-shot accuracy, plus damage checks when --locus is given.
    Eval(RunArgs),
    /// Summarize a run directory and render its heatmaps.
    Report(cmd::report::ReportArgs),
}

/// Sizes the global pool and picks the execution mode.
fn execution(threads: Option<usize>) -> Result<Execution> {
    match threads {
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("configuring the thread pool")?;
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::Parallel),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fetch(args) => cmd::fetch::run(&args),
        Command::Report(args) => cmd::report::run(&args),
        Command::Synth(args) => cmd::synth::run(&args.resolve()?),
        Command::Discover { run, heatmap } => {
            let cfg = run.resolve()?;
            cmd::discover::run(&cfg, execution(cfg.threads)?, heatmap)
        }
        Command::Mitigate(args) => {
            let cfg = args.resolve()?;
            cmd::mitigate::run(&cfg, execution(cfg.threads)?)
        }
        Command::Eval(args) => {
            let cfg = args.resolve()?;
            cmd::eval::run(&cfg, execution(cfg.threads)?)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
