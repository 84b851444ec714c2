use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "skewlab", version, about = "Accessibility, holonomy and ergodic decompositions of skew products")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify a system file and write classify.toml and displacement.csv.
    Classify(RunConfig),
    /// Classify, then estimate Birkhoff means on each ergodic component.
    Decompose(RunConfig),
    /// Rotation number of a circle-map file.
    Rotnum(RunConfig),
    /// Generator su-loop maps and their common fixed heights.
    Holonomy(RunConfig),
    /// Translation numbers and the semiconjugacy of a line action file.
    Plante(RunConfig),
    /// Invariant graphs and checks of the 3-torus example.
    Hhu(RunConfig),
    /// A seeded orbit of a system file.
    Orbit(RunConfig),
}

/// Flags shared by every subcommand; unset values take per-command defaults.
#[derive(Args, Clone, Debug)]
pub struct RunConfig {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Forcing of the hhu example: `cos` or `sin-minus-x`.
    #[arg(long, default_value = "cos")]
    pub variant: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Classify(c) => commands::classify(c),
        Command::Decompose(c) => commands::decompose(c),
        Command::Rotnum(c) => commands::rotnum(c),
        Command::Holonomy(c) => commands::holonomy(c),
        Command::Plante(c) => commands::plante(c),
        Command::Hhu(c) => commands::hhu(c),
        Command::Orbit(c) => commands::orbit(c),
    };
    match result {
        Ok(commands::Outcome::Conclusive) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Inconclusive) => ExitCode::from(2),
        Err(e) => {
            eprintln!("skewlab: {e}");
            ExitCode::from(1)
        }
    }
}
