//! `sed`: feature extraction, training, evaluation and detection for
//! polyphonic sound event detection.

mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::UsageError;
use config::{Overrides, RunConfig};
use sed_core::features::Combination;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_TRAINING: u8 = 3;

#[derive(Parser)]
#[command(name = "sed", version, about = "Polyphonic sound event detection with spatial and harmonic features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Process only this context.
    #[arg(long, global = true)]
    context: Option<String>,
    /// Feature combination, e.g. `mel_2;tdoa;pitch_2`.
    #[arg(long, global = true)]
    features: Option<Combination>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    /// Output directory (the dataset root for `synth`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Posterior above which a class is active.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Dataset root holding `audio/` and `meta/`.
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute features and target rolls for every recording.
    Extract(CommonOnly),
    /// Cross-validated training on extracted features.
    Train(CommonOnly),
    /// Score trained folds and print a per-context table.
    Evaluate(CommonOnly),
    /// Write detected events of one recording.
    Detect(DetectArgs),
    /// Extract, train and evaluate every configured combination.
    Ablate(CommonOnly),
    /// Generate a synthetic binaural dataset.
    Synth(CommonOnly),
}

#[derive(Args)]
struct CommonOnly {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    /// WAV file to analyse.
    #[arg(long)]
    input: PathBuf,
    /// Where to write the event list; standard output when omitted.
    #[arg(long)]
    events: Option<PathBuf>,
}

fn resolve(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref()).map_err(|e| anyhow::Error::new(UsageError(format!("{e:#}"))))?;
    cfg.apply(&Overrides {
        context: common.context.clone(),
        features: common.features.clone(),
        seed: common.seed,
        folds: common.folds,
        out: common.out.clone(),
        threshold: common.threshold,
        data_root: common.data_root.clone(),
    });
    cfg.validate().map_err(|e| anyhow::Error::new(UsageError(format!("{e:#}"))))?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Extract(a) => commands::extract(&resolve(&a.common)?),
        Command::Train(a) => commands::train(&resolve(&a.common)?),
        Command::Evaluate(a) => commands::evaluate(&resolve(&a.common)?).map(|_| ()),
        Command::Detect(a) => {
            let cfg = resolve(&a.common)?;
            commands::detect(&cfg, &a.checkpoint, &a.input, a.events.as_ref())
        }
        Command::Ablate(a) => commands::ablate(&resolve(&a.common)?).map(|_| ()),
        Command::Synth(a) => commands::synth(&resolve(&a.common)?),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return EXIT_USAGE;
        }
        if let Some(sed_core::Error::Divergence { .. }) = cause.downcast_ref::<sed_core::Error>() {
            return EXIT_TRAINING;
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
