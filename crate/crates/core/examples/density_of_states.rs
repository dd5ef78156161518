//! Eigenvalue counts per unit area on growing Dirichlet squares approach the
//! magnetic symbol B_0(B, λ) from below.
//!
//! Run with `cargo run --release --example density_of_states`.

use landau::experiments::dos_scan;
use landau::symbol::FieldStrength;

fn main() -> landau::Result<()> {
    let rows = dos_scan(FieldStrength::new(1.0)?, 3.5, &[4, 8, 16, 32], 0.02, true)?;
    println!("{:>5} {:>8} {:>7} {:>10} {:>10} {:>8}", "flux", "side", "h", "dirichlet", "periodic", "ratio");
    for r in rows {
        println!(
            "{:>5} {:>8.4} {:>7.4} {:>10} {:>10} {:>8.4}",
            r.flux,
            r.side,
            r.h,
            r.count_dirichlet,
            r.count_periodic.map_or("-".into(), |p| p.to_string()),
            r.ratio
        );
    }
    Ok(())
}
