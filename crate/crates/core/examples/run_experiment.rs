//! Drives an experiment from code the same way the command-line tool does,
//! with overrides, and prints its assertions and artifacts.
//!
//! Run with `cargo run --release --example run_experiment [out-dir]`.

use landau::experiments::{run, Experiment, ExperimentConfig};

fn main() -> landau::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/bc-bracket".into());
    let overrides = vec![("fluxes".to_string(), "4,16".to_string())];
    let cfg = ExperimentConfig::new(Experiment::BcBracket, None, &overrides, Some(7))?;
    let outcome = run(&cfg, out.as_ref())?;
    for a in &outcome.manifest.assertions {
        println!("[{}] {}: {}", if a.passed { "pass" } else { "FAIL" }, a.name, a.detail);
    }
    println!("artifacts: {}", outcome.manifest.artifacts.join(", "));
    println!("manifest: {}", outcome.manifest_path.display());
    Ok(())
}
