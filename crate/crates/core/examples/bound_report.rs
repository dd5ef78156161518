//! Checks the spectral bounds on a Dirichlet disk in a magnetic field and
//! prints every row whose ratio exceeds 1.
//!
//! Run with `cargo run --release --example bound_report [B]`.

use landau::bounds::{bound_report, liyau_check, Allowance, BoundFamily, ReportSetup};
use landau::lattice::{assemble, rasterize_domain, BoundaryCondition, Shape};
use landau::spectra::eigs_below;

fn main() -> landau::Result<()> {
    let b: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let h = 0.05;
    let domain = rasterize_domain(&Shape::Disk { radius: 2.5 }, h)?;
    let op = assemble(&domain, b, BoundaryCondition::Dirichlet)?;
    let lambdas: Vec<f64> = (1..=16).map(|k| 0.5 * k as f64 + 0.01).collect();
    let slice = eigs_below(&op, 8.01)?;
    println!(
        "disk r=2.5: {} unknowns, {} eigenvalues below {}, area {:.4}",
        op.dim(),
        slice.eigenvalues.len(),
        slice.cutoff,
        domain.area()
    );
    let setup = ReportSetup {
        area: domain.area(),
        b,
        h,
        tiling: false,
        allowance: Allowance::calibrate(32, 60.0)?,
        notes: "disk".into(),
    };
    let families = [
        BoundFamily::Polya,
        BoundFamily::Berezin,
        BoundFamily::Main1,
        BoundFamily::Main1number0,
        BoundFamily::Elv,
        BoundFamily::Elv2,
        BoundFamily::AppendixA,
    ];
    let reports = bound_report(&slice, &setup, &families, &[0.0, 0.5, 1.0, 1.5], &lambdas)?;
    let worst = reports.iter().map(|r| r.ratio).fold(0.0, f64::max);
    println!("{} rows, largest ratio {worst:.4}", reports.len());
    for r in reports.iter().filter(|r| r.ratio > 1.0) {
        println!("{:<14} γ={:<4} λ={:<6} ratio {:.4} {}", r.family, r.gamma, r.lambda, r.ratio, r.flag_label());
    }
    println!("eigenvalue sums: min_N Σλ_j·|Ω|/(2πN²) = {:.4}", liyau_check(&slice, domain.area())?);
    Ok(())
}
