//! Sharp constants of the planar magnetic symbol.
//!
//! Run with `cargo run --release --example symbol_table`.

use landau::symbol::{excess_factor, lcl_constant, rho_constant, sup_ratio, FieldStrength, Maximizer, MomentOrder};

fn main() -> landau::Result<()> {
    let b = FieldStrength::new(1.0)?;
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}  argmax", "gamma", "L_cl", "R_gamma", "sup ratio", "rho_2");
    for gamma in [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0] {
        let g = MomentOrder::new(gamma)?;
        let r = if gamma < 1.0 { format!("{:.10}", excess_factor(g)?) } else { "-".into() };
        let rho = if gamma < 1.5 { format!("{:.6}", rho_constant(g, 2)?) } else { "-".into() };
        let s = sup_ratio(g, b);
        let at = match s.argmax {
            Maximizer::At(l) => format!("λ = {l:.6}"),
            Maximizer::RightLimit(l) => format!("λ ↓ {l}"),
            Maximizer::Infinity => "λ → ∞".into(),
        };
        println!("{gamma:>6} {:>12.8} {r:>12} {:>12.8} {rho:>12}  {at}", lcl_constant(g, 2)?, s.sup);
    }
    Ok(())
}
