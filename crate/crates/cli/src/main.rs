mod artifacts;
mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use learnsat::pipeline::ExperimentConfig;

use artifacts::{OutDir, RESOLVED_CONFIG};
use commands::Context;
use error::CliError;

/// Learner-satisfaction experiments: topics, sentiment embeddings and
/// behavioral signals fused for rating regression.
#[derive(Parser)]
#[command(name = "learnsat", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the experiment seed and the synthetic generator seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate a planted-signal review dataset.
    Synth,
    /// Validate and import reviews from `data.path`.
    Ingest,
    /// Assign reviews to train/val/test.
    Split,
    /// Build the vocabulary and fit the topic model on the training split.
    FitTopics,
    /// Embed every review with the configured provider.
    Embed,
    /// Compute the per-review feature table.
    Featurize,
    /// Fit every configured backbone on the full feature set.
    Train,
    /// Compare backbones and single-source baselines.
    Benchmark,
    /// Evaluate the ablation masks.
    Ablate,
    /// Render saved evaluation reports.
    Report,
}

fn resolve(common: &Common) -> Result<Context, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.data.synthetic.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = Some(out.clone());
    }
    cfg.validate()?;
    let root = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let out = OutDir::create(root)?;
    out.write_json(RESOLVED_CONFIG, &cfg)?;
    Ok(Context { cfg, out })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = resolve(&cli.common)?;
    match cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::Ingest => commands::ingest(&ctx),
        Command::Split => commands::split(&ctx),
        Command::FitTopics => commands::fit_topics(&ctx),
        Command::Embed => commands::embed(&ctx),
        Command::Featurize => commands::featurize(&ctx),
        Command::Train => commands::train_models(&ctx),
        Command::Benchmark => commands::benchmark(&ctx),
        Command::Ablate => commands::ablate(&ctx),
        Command::Report => commands::report(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
