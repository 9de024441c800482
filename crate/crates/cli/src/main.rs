use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use flowpath_cli::commands;
use flowpath_core::data::SyntheticKind;
use flowpath_core::verify::VerifyLevel;

#[derive(Parser)]
#[command(
    name = "flowpath",
    about = "Neural CDEs with learnable invertible control paths: experiments, ablations, verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Fast,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Spiral2,
    Oscillator,
}

#[derive(Subcommand)]
enum Command {
    /// Train one method per (missing rate × seed) and aggregate the results.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's `out_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Maximum concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the fixed method-comparison set and emit a single table.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the structural verification suite.
    Verify {
        #[arg(long, value_enum, default_value_t = LevelArg::Fast)]
        level: LevelArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate a synthetic dataset as CSV.
    Synth {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        noise_sd: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train { config, out, jobs } => commands::cmd_train(&config, out, jobs),
        Command::Ablate { config, out, jobs } => commands::cmd_ablate(&config, out, jobs),
        Command::Verify { level, out } => {
            let level = match level {
                LevelArg::Fast => VerifyLevel::Fast,
                LevelArg::Full => VerifyLevel::Full,
            };
            commands::cmd_verify(level, &out)
        }
        Command::Synth {
            kind,
            n,
            noise_sd,
            seed,
            out,
        } => {
            let kind = match kind {
                KindArg::Spiral2 => SyntheticKind::Spiral2,
                KindArg::Oscillator => SyntheticKind::Oscillator,
            };
            commands::cmd_synth(kind, n, noise_sd, seed, &out)
        }
    }
}
