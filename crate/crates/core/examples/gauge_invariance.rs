//! Multiplying the lattice wave function by e^{iχ} changes every hopping
//! phase but not the spectrum, and every plaquette still carries flux B·h².
//!
//! Run with `cargo run --release --example gauge_invariance`.

use landau::lattice::{assemble, gauge_shift, rasterize_domain, BoundaryCondition, Shape};
use landau::spectra::dense_spectrum;

fn main() -> landau::Result<()> {
    let domain = rasterize_domain(&Shape::l_shape(1.0), 0.1)?;
    let op = assemble(&domain, 2.0, BoundaryCondition::Neumann)?;
    let chi: Vec<f64> = op.sites().iter().map(|[x, y]| 3.0 * x * y + (5.0 * x).sin()).collect();
    let shifted = gauge_shift(&op, &chi)?;
    let (e0, e1) = (dense_spectrum(&op), dense_spectrum(&shifted));
    let drift = e0.iter().zip(&e1).map(|(a, b)| (a - b).abs() / a.abs().max(1.0)).fold(0.0, f64::max);
    let moved = op
        .edges()
        .filter(|&(p, q, w)| shifted.entry(p, q).is_some_and(|v| (v - w).norm() > 1e-6 * w.norm()))
        .count();
    println!("L-shape, B = 2, Neumann: {} sites, {moved} of {} hoppings changed", op.dim(), op.edges().count());
    println!("lowest eigenvalues {:?}", &e0[..5]);
    println!("largest relative eigenvalue drift {drift:.2e}");
    Ok(())
}
