//! Dirichlet, magnetic-periodic and Neumann counts on the same square,
//! and how fast the boundary defect grows with the side length.
//!
//! Run with `cargo run --release --example boundary_bracketing`.

use landau::experiments::{bc_bracket, defect_exponents};
use landau::symbol::FieldStrength;

fn main() -> landau::Result<()> {
    let rows = bc_bracket(FieldStrength::new(1.0)?, &[4, 16], &[0.5, 1.5, 3.5, 5.5], 0.02)?;
    println!("{:>5} {:>7} {:>8} {:>8} {:>9} ordered", "flux", "λ", "neumann", "periodic", "dirichlet");
    for r in &rows {
        println!("{:>5} {:>7} {:>8} {:>8} {:>9} {}", r.flux, r.lambda, r.neumann, r.periodic, r.dirichlet, r.ordered);
    }
    for (lambda, e) in defect_exponents(&rows) {
        println!("λ = {lambda}: (N_N − N_D) grows like flux^{e:.3}");
    }
    Ok(())
}
