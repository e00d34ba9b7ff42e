use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use invariant_kit::RoundingMode;
use invariant_kit_cli::{execute, Invocation, Mode, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "invariant-kit", version, about = "Robust forward invariance for neural-network-controlled systems")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `out`, or `out/` next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    rounding: Option<Rounding>,
    /// With `falsify`: re-check the witnesses of a saved report.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Command {
    Verify,
    Family,
    Transform,
    Falsify,
    Simulate,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rounding {
    Sound,
    Fast,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mode = match cli.command {
        Command::Verify => Mode::Verify,
        Command::Family => Mode::Family,
        Command::Transform => Mode::Transform,
        Command::Falsify => Mode::Falsify,
        Command::Simulate => Mode::Simulate,
    };
    if cli.replay.is_some() && mode != Mode::Falsify {
        eprintln!("error: --replay only applies to falsify");
        return ExitCode::from(EXIT_ERROR as u8);
    }
    let inv = Invocation {
        mode,
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        rounding: cli.rounding.map(|r| match r {
            Rounding::Sound => RoundingMode::Sound,
            Rounding::Fast => RoundingMode::Fast,
        }),
        replay: cli.replay,
    };
    match execute(&inv, &mut std::io::stdout()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
