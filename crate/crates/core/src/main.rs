use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use landau::experiments::{run, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "landau", version, about = "Spectral bounds for the constant-field magnetic Laplacian")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate magnetic symbols, excess factors and symbol-ratio suprema.
    SymbolTable(Common),
    /// Check Landau-level clusters on the magnetic torus.
    TorusVerify(Common),
    /// Density of states on growing Dirichlet squares.
    DosScan(Common),
    /// Dirichlet / periodic / Neumann count bracketing.
    BcBracket(Common),
    /// Evaluate every bound family on the test matrix of domains.
    BoundsMatrix(Common),
    /// Search for squares violating the Pólya-type bound.
    Counterexample(Common),
    /// Riesz means on a square times an interval.
    #[command(name = "product-3d")]
    Product3d(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Override a configuration value, e.g. `--set flux=16`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    overrides: Vec<(String, String)>,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = match cli.command {
        Command::SymbolTable(c) => (Experiment::SymbolTable, c),
        Command::TorusVerify(c) => (Experiment::TorusVerify, c),
        Command::DosScan(c) => (Experiment::DosScan, c),
        Command::BcBracket(c) => (Experiment::BcBracket, c),
        Command::BoundsMatrix(c) => (Experiment::BoundsMatrix, c),
        Command::Counterexample(c) => (Experiment::Counterexample, c),
        Command::Product3d(c) => (Experiment::Product3d, c),
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let cfg = match ExperimentConfig::load(experiment, common.config.as_deref(), &common.overrides, common.seed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cfg, &common.out) {
        Ok(outcome) => {
            for a in &outcome.manifest.assertions {
                println!("[{}] {}: {}", if a.passed { "pass" } else { "FAIL" }, a.name, a.detail);
            }
            println!("manifest: {}", outcome.manifest_path.display());
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
