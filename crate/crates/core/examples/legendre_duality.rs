//! Lower bounds on eigenvalue sums from upper bounds on Riesz means: the
//! Legendre transform of λ ↦ L_cl λ²|Ω| at slope N is 2πN²/|Ω|, which the
//! sum of the first N Dirichlet eigenvalues of a square exceeds.
//!
//! Run with `cargo run --release --example legendre_duality`.

use std::f64::consts::PI;

use landau::lattice::{assemble, BoundaryCondition, GridDomain};
use landau::spectra::{eigen_sum, eigs_below};
use landau::symbol::{lcl_constant, legendre_transform, ConvexTable, MomentOrder};

fn main() -> landau::Result<()> {
    let side = PI;
    let area = side * side;
    let lcl = lcl_constant(MomentOrder::new(1.0)?, 2)?;
    let knots: Vec<f64> = (0..=400).map(|k| k as f64 * PI / area).collect();
    let table = ConvexTable::from_fn(knots, |l| lcl * area * l * l)?;
    let slice = eigs_below(&assemble(&GridDomain::square(side, side / 40.0)?, 0.0, BoundaryCondition::Dirichlet)?, 100.0)?;
    println!("{:>3} {:>12} {:>12} {:>12}", "N", "transform", "2πN²/|Ω|", "Σ λ_j");
    for n in [1, 2, 5, 10, 20, 30, 40] {
        let v = legendre_transform(&table, n as f64)?;
        println!(
            "{n:>3} {:>12.6} {:>12.6} {:>12.6}",
            v.value,
            2.0 * PI * (n * n) as f64 / area,
            eigen_sum(&slice, n)?
        );
    }
    Ok(())
}
