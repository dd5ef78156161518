//! With a magnetic field the Pólya bound N(λ) ≤ λ|Ω|/(4π) fails: just above
//! the lowest Landau level the count reaches about twice the bound.
//!
//! Run with `cargo run --release --example polya_violation`.

use std::f64::consts::PI;

use landau::bounds::flux_square;
use landau::lattice::{assemble, BoundaryCondition, GridDomain};
use landau::spectra::count_below;

fn main() -> landau::Result<()> {
    let b = 1.0;
    for lambda in [1.2, 1.1, 1.05] {
        for flux in [8, 16, 32, 64] {
            let (side, cells, h) = flux_square(b, flux, 0.02);
            let op = assemble(&GridDomain::square(side, h)?, b, BoundaryCondition::Dirichlet)?;
            let cert = count_below(&op, lambda)?;
            let ratio = cert.count as f64 * 4.0 * PI / (lambda * side * side);
            println!(
                "λ = {lambda:<5} flux {flux:>3} ({cells:>3} cells/side): N = {:>4}, N/(λ|Ω|/4π) = {ratio:.4}",
                cert.count
            );
        }
    }
    Ok(())
}
