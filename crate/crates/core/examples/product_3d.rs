//! Riesz means of a box (square × interval) in a field along the interval,
//! against the three-dimensional magnetic symbol.
//!
//! Run with `cargo run --release --example product_3d`.

use landau::bounds::{flux_square, product_3d_moment};
use landau::lattice::{assemble, BoundaryCondition, GridDomain};
use landau::spectra::eigs_below;
use landau::symbol::{magnetic_symbol_3d, FieldStrength, MomentOrder};

fn main() -> landau::Result<()> {
    let b = FieldStrength::new(1.0)?;
    let interval = 4.0;
    let (side, _, h) = flux_square(b.value(), 16, 0.02);
    let slice = eigs_below(&assemble(&GridDomain::square(side, h)?, b.value(), BoundaryCondition::Dirichlet)?, 6.1)?;
    let volume = side * side * interval;
    println!("{:>5} {:>6} {:>14} {:>14} {:>7}", "gamma", "λ", "box moment", "symbol·|Ω|", "ratio");
    for gamma in [0.5, 1.0, 1.5] {
        let g = MomentOrder::new(gamma)?;
        for lambda in [2.0, 3.05, 4.0, 5.05, 6.0] {
            let lhs = product_3d_moment(&slice, interval, lambda, g)?;
            let rhs = magnetic_symbol_3d(b, lambda, g).value * volume;
            println!("{gamma:>5} {lambda:>6} {lhs:>14.6} {rhs:>14.6} {:>7.4}", lhs / rhs);
        }
    }
    Ok(())
}
