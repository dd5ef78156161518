//! Landau levels of the magnetic-periodic square: with flux Φ every level
//! B(2k+1) appears as a cluster of exactly Φ eigenvalues.
//!
//! Run with `cargo run --release --example torus_landau_levels [flux]`.

use landau::experiments::torus_verify;
use landau::spectra::SolverOptions;
use landau::symbol::FieldStrength;

fn main() -> landau::Result<()> {
    let flux: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    let b = FieldStrength::new(1.0)?;
    let (report, slice) = torus_verify(b, flux, 0.02, 0, 6.0, 0.2, &SolverOptions::default())?;
    println!("side {:.4}, h {:.4}, {} eigenvalues below 6B", report.side, report.h, slice.eigenvalues.len());
    for (c, p) in report.clusters.iter().zip(&report.predicted) {
        println!(
            "level {:>4}: {:>3} eigenvalues (expected {}), center {:.5}, width {:.2e}",
            p.level, c.count, p.multiplicity, c.center, c.width
        );
    }
    for a in report.verify(3, 0.05) {
        println!("[{}] {}: {}", if a.passed { "pass" } else { "FAIL" }, a.name, a.detail);
    }
    Ok(())
}
