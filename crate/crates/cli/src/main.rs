//! `gazelab`: run the eye-tracking analysis pipeline from a JSON config.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 some recording
//! failed the tracking-quality gate (artifacts are still written).

mod artifact;
mod commands;
mod config;
mod error;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::artifact::Stamp;
use crate::commands::Ctx;
use crate::config::{ConfigFile, Effective, Overrides};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "gazelab", version, about = "Eye-movement events, features, explainable models and statistics from VR headset logs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tracking quality, gap repair, pupil cleaning and event detection.
    Detect(RunArgs),
    /// Windowed feature matrix.
    Features(RunArgs),
    /// Nested cross-validation, final model and SHAP values.
    Train(RunArgs),
    /// SHAP importance of the trained model and SHAP-driven feature elimination.
    Explain(RunArgs),
    /// Per-feature comparison tables.
    Stats(RunArgs),
    /// Planted synthetic recordings with ground truth.
    Synth(RunArgs),
    /// detect, features, train, explain and stats.
    Pipeline(RunArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config; paths inside it are relative to its directory.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "GAZELAB_OUT")]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = "GAZELAB_WORKERS")]
    workers: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
}

fn run(cmd: Command) -> Result<Vec<String>, CliError> {
    let (Command::Detect(args)
    | Command::Features(args)
    | Command::Train(args)
    | Command::Explain(args)
    | Command::Stats(args)
    | Command::Synth(args)
    | Command::Pipeline(args)) = &cmd;
    let mut file = match &args.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let overrides = args.overrides.apply(&mut file);
    let cfg = Effective::resolve(&file)?;
    if let Some(n) = args.workers.or(file.workers) {
        if n == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("worker pool: {e}")))?;
    }
    let ctx = Ctx {
        stamp: Stamp { hash: cfg.hash(), overrides },
        out: commands::out_dir(args.out.clone(), file.output_dir.clone()),
        cfg,
    };
    log::info!("config {} -> {}", ctx.stamp.hash, ctx.out.display());
    match cmd {
        Command::Detect(_) => {
            let batch = commands::process(&ctx)?;
            commands::detect(&ctx, &batch)?;
            Ok(batch.excluded())
        }
        Command::Features(_) => {
            let batch = commands::process(&ctx)?;
            if batch.any_passed() {
                commands::features(&ctx, &batch)?;
            }
            Ok(batch.excluded())
        }
        Command::Train(_) => commands::train(&ctx).map(|()| Vec::new()),
        Command::Explain(_) => commands::explain(&ctx).map(|()| Vec::new()),
        Command::Stats(_) => commands::stats(&ctx).map(|()| Vec::new()),
        Command::Synth(_) => commands::synth(&ctx).map(|()| Vec::new()),
        Command::Pipeline(_) => commands::pipeline(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(excluded) if excluded.is_empty() => ExitCode::SUCCESS,
        Ok(excluded) => {
            eprintln!("gazelab: excluded below the tracking gate: {}", excluded.join(", "));
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("gazelab: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
