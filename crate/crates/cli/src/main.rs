// SPDX-License-Identifier: Apache-2.0

//! `swinvib` command-line tool.
//!
//! Exit codes: 0 success, 2 validation error, 3 format error, 4 when a
//! metrics report could only be produced with undefined entries, 1 for
//! anything else (I/O and the like).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swinvib::config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "swinvib",
    version,
    about = "Sliding-window bottleneck filtering of retrieved context"
)]
struct Cli {
    /// Key-value config file; defaults to $SVIB_CONFIG. Flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for training and scoring (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic per-layer feature files and a manifest.
    GenSynth(commands::GenSynthArgs),
    /// Build per-layer training files from a JSON-lines corpus.
    Prepare(commands::PrepareArgs),
    /// Train one bottleneck per layer and save the ensemble.
    Train(commands::TrainArgs),
    /// Filter one context with a trained ensemble.
    Filter(commands::FilterArgs),
    /// Compute the metrics report of a JSON-lines answer file.
    EvalMc(commands::EvalMcArgs),
    /// Write a synthetic evaluation corpus.
    GenEval(commands::GenEvalArgs),
    /// Sweep threshold, bottleneck strength and window length.
    Sweep(commands::SweepArgs),
    /// Emit theory curves as CSV.
    Theory(commands::TheoryArgs),
}

/// Flags mirroring the config-file keys. Unset flags keep the file value.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    #[arg(long)]
    window_len: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    block: Option<usize>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// keep-top-1 | empty-context | pass-through
    #[arg(long)]
    fallback: Option<String>,
    #[arg(long)]
    separator: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunFlags {
    pub fn resolve(&self, config: Option<&std::path::Path>) -> swinvib::Result<RunConfig> {
        let mut cfg = RunConfig::load(config)?;
        let text = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string());
        let overrides = [
            ("window_len", self.window_len.map(|v| v.to_string())),
            ("stride", self.stride.map(|v| v.to_string())),
            ("block", self.block.map(|v| v.to_string())),
            ("xi", self.xi.map(|v| v.to_string())),
            ("beta", self.beta.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("fallback", self.fallback.clone()),
            ("separator", self.separator.clone()),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("learning_rate", self.learning_rate.map(|v| v.to_string())),
            ("batch_size", self.batch_size.map(|v| v.to_string())),
            ("corpus", text(&self.corpus)),
            ("features", text(&self.features)),
            ("models", text(&self.models)),
            ("out", text(&self.out)),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub struct Context {
    pub config: Option<PathBuf>,
    pub threads: usize,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<swinvib::Error>() {
            return match e {
                swinvib::Error::Validation(_) => 2,
                swinvib::Error::Format { .. }
                | swinvib::Error::Json(_)
                | swinvib::Error::Csv(_) => 3,
                _ => 1,
            };
        }
        if cause.downcast_ref::<commands::UndefinedMetrics>().is_some() {
            return 4;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_target(false)
        .init();
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let ctx = Context {
        config: cli.config,
        threads: cli.threads,
    };
    let result = match &cli.command {
        Command::GenSynth(a) => commands::gen_synth(&ctx, a),
        Command::Prepare(a) => commands::prepare(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Filter(a) => commands::filter(&ctx, a),
        Command::EvalMc(a) => commands::eval_mc(&ctx, a),
        Command::GenEval(a) => commands::gen_eval(&ctx, a),
        Command::Sweep(a) => commands::sweep(&ctx, a),
        Command::Theory(a) => commands::theory(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
