use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use occlusym_cli::commands::summary_line;
use occlusym_cli::config::parse_override;
use occlusym_cli::{run_command, CliError, Command, RunConfig};

#[derive(Parser)]
#[command(name = "occlusym", version, about = "Occlusion-aware voxel reconstruction pipeline")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// Run config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.steps=500`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Worker threads for data-parallel stages.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Random 2D occluder masks, or mesh-surface occlusion renders.
    GenMasks,
    /// Procedural training and held-out shape sets.
    GenDataset,
    /// Train the flow model; writes loss.csv and a checkpoint.
    Train,
    /// Reconstruct held-out shapes from occluded views.
    Sample,
    /// IoU, COV and MMD under each conditioning regime.
    Eval,
    /// Loss curve and markdown summary from train and eval outputs.
    Report,
}

impl Cmd {
    fn resolve(self) -> (Command, &'static str) {
        match self {
            Cmd::GenMasks => (Command::GenMasks, "gen-masks"),
            Cmd::GenDataset => (Command::GenDataset, "gen-dataset"),
            Cmd::Train => (Command::Train, "train"),
            Cmd::Sample => (Command::Sample, "sample"),
            Cmd::Eval => (Command::Eval, "eval"),
            Cmd::Report => (Command::Report, "report"),
        }
    }
}

fn run(args: &Args) -> Result<String, CliError> {
    let config = args.config.as_ref().ok_or_else(|| CliError::Usage("--config PATH is required".into()))?;
    if args.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let overrides = args.overrides.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    let cfg = RunConfig::load(config, &overrides)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} workers: {e}", args.jobs)))?;
    let (cmd, name) = args.command.resolve();
    let out = pool.install(|| run_command(cmd, &cfg))?;
    Ok(summary_line(name, &out))
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
