//! Semiclassical symbols and sharp constants for the constant-field magnetic
//! Laplacian.
//!
//! The central object is the Landau-level sum
//!
//! ```text
//! B_γ(B, λ) = (2π)⁻¹ B Σ_{k≥0} (λ − B(2k+1))₊^γ
//! ```
//!
//! which replaces the classical phase-space average `L^cl_{γ,2} λ^{γ+1}` when
//! the large-domain limit is taken at fixed field. For γ = 0 the sum is
//! left-continuous in λ: a level sitting exactly at λ is not counted.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::{gamma as gamma_fn, integrate, pow0};

/// Riesz-mean order γ ≥ 0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct MomentOrder(f64);

impl MomentOrder {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma >= 0.0 {
            Ok(MomentOrder(gamma))
        } else {
            Err(Error::Domain(format!("moment order must be >= 0, got {gamma}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Strictly positive constant magnetic field strength.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct FieldStrength(f64);

impl FieldStrength {
    pub fn new(b: f64) -> Result<Self> {
        if b.is_finite() && b > 0.0 {
            Ok(FieldStrength(b))
        } else {
            Err(Error::Domain(format!("field strength must be > 0, got {b}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Value of a magnetic symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymbolValue {
    pub value: f64,
    /// Set when the γ = 0 left-continuity rule decided which levels count.
    pub left_limit_convention: bool,
}

/// Relative width of the tie band around a Landau level in which a γ = 0
/// term is treated as sitting exactly at λ (and therefore not counted).
pub const LEVEL_TIE_TOLERANCE: f64 = 1e-14;

/// Classical constant `L^cl_{γ,d}` for any dimension `d ≥ 1`.
pub(crate) fn lcl_any(gamma: f64, d: u32) -> f64 {
    let half_d = 0.5 * d as f64;
    gamma_fn(gamma + 1.0) / (2f64.powi(d as i32) * PI.powf(half_d) * gamma_fn(gamma + half_d + 1.0))
}

/// Classical phase-space constant `L^cl_{γ,d}` for d ∈ {1, 2, 3}.
pub fn lcl_constant(gamma: MomentOrder, d: u32) -> Result<f64> {
    let g = gamma.value();
    match d {
        2 => Ok(1.0 / (4.0 * PI * (g + 1.0))),
        1 | 3 => Ok(lcl_any(g, d)),
        _ => Err(Error::Domain(format!("L^cl is provided for d in {{1,2,3}}, got d={d}"))),
    }
}

/// Number of Landau levels `B(2k+1)` that contribute to the γ-symbol at λ.
///
/// For γ = 0 a level within `LEVEL_TIE_TOLERANCE·λ` of λ is excluded.
pub fn landau_level_count(b: FieldStrength, lambda: f64, gamma: MomentOrder) -> usize {
    let b = b.value();
    if !(lambda > b) {
        return 0;
    }
    let mut count = ((lambda / b - 1.0) / 2.0).ceil().max(0.0) as usize;
    let tie = if gamma.value() == 0.0 {
        LEVEL_TIE_TOLERANCE * lambda.abs()
    } else {
        0.0
    };
    // floating-point guard on both sides of the ceiling
    while count > 0 && lambda - b * (2.0 * (count - 1) as f64 + 1.0) <= tie {
        count -= 1;
    }
    while lambda - b * (2.0 * count as f64 + 1.0) > tie {
        count += 1;
    }
    count
}

fn landau_sum(b: f64, lambda: f64, exponent: f64, levels: usize) -> f64 {
    (0..levels)
        .map(|k| pow0(lambda - b * (2.0 * k as f64 + 1.0), exponent))
        .sum()
}

/// The two-dimensional magnetic symbol `B_γ(B, λ)`.
pub fn magnetic_symbol_2d(b: FieldStrength, lambda: f64, gamma: MomentOrder) -> SymbolValue {
    let levels = landau_level_count(b, lambda, gamma);
    let sum = landau_sum(b.value(), lambda, gamma.value(), levels);
    SymbolValue {
        value: b.value() / (2.0 * PI) * sum,
        left_limit_convention: gamma.value() == 0.0,
    }
}

/// The three-dimensional magnetic symbol for a field along the third axis:
/// `Γ(γ+1)/Γ(γ+3/2) · B/(4π^{3/2}) · Σ (λ − B(2k+1))₊^{γ+1/2}`.
pub fn magnetic_symbol_3d(b: FieldStrength, lambda: f64, gamma: MomentOrder) -> SymbolValue {
    let g = gamma.value();
    // exponent γ+1/2 > 0, so the tie rule is irrelevant here
    let levels = landau_level_count(b, lambda, MomentOrder(g + 0.5));
    let sum = landau_sum(b.value(), lambda, g + 0.5, levels);
    let prefactor = gamma_fn(g + 1.0) / gamma_fn(g + 1.5) * b.value() / (4.0 * PI.powf(1.5));
    SymbolValue {
        value: prefactor * sum,
        left_limit_convention: false,
    }
}

/// Sharp excess factor `R_γ` for 0 ≤ γ < 1: `R_0 = 2`, `R_γ = 2(γ/(γ+1))^γ`.
pub fn excess_factor(gamma: MomentOrder) -> Result<f64> {
    let g = gamma.value();
    if g >= 1.0 {
        return Err(Error::Domain(format!(
            "excess factor is defined for 0 <= gamma < 1 (it equals 1 beyond), got {g}"
        )));
    }
    if g == 0.0 {
        Ok(2.0)
    } else {
        Ok(2.0 * (g / (g + 1.0)).powf(g))
    }
}

/// Constant `C(γ,σ)` in `(E−λ)₋^γ ≤ C(γ,σ)(μ−λ)^{γ−σ}(E−μ)₋^σ` for μ > λ.
pub fn goingdown_constant(gamma: MomentOrder, sigma: f64) -> Result<f64> {
    let g = gamma.value();
    if !(sigma > g) {
        return Err(Error::Domain(format!("need sigma > gamma, got sigma={sigma}, gamma={g}")));
    }
    if g == 0.0 {
        return Ok(1.0);
    }
    Ok(sigma.powf(-sigma) * g.powf(g) * (sigma - g).powf(sigma - g))
}

/// Closed-form supremum over λ > 0 of `B_γ(B,λ) / (L^cl_{γ,2} λ^{γ+1})`.
pub fn sup_ratio_closed_form(gamma: MomentOrder) -> f64 {
    match gamma.value() {
        g if g < 1.0 => excess_factor(gamma).expect("gamma < 1"),
        _ => 1.0,
    }
}

/// Where the supremum of the symbol ratio is reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Maximizer {
    /// Attained at this λ.
    At(f64),
    /// Approached as λ decreases to this Landau level from above.
    RightLimit(f64),
    /// Approached as λ → ∞.
    Infinity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupRatio {
    pub sup: f64,
    pub argmax: Maximizer,
}

/// `B_γ(B,λ) / (L^cl_{γ,2} λ^{γ+1})`.
pub fn symbol_ratio(b: FieldStrength, lambda: f64, gamma: MomentOrder) -> f64 {
    let g = gamma.value();
    magnetic_symbol_2d(b, lambda, gamma).value * 4.0 * PI * (g + 1.0) / lambda.powf(g + 1.0)
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximum of the symbol ratio over the band `(B(2k+1), B(2k+3)]`.
fn band_max(b: FieldStrength, gamma: MomentOrder, k: usize) -> (f64, f64) {
    let bv = b.value();
    let lo = bv * (2.0 * k as f64 + 1.0);
    let hi = bv * (2.0 * k as f64 + 3.0);
    let lo_in = lo * (1.0 + 1e-12);
    let f = |l: f64| symbol_ratio(b, l, gamma);
    let (mut arg, mut val) = golden_max(f, lo_in, hi, 1e-10 * hi);
    for x in [lo_in, hi] {
        let v = f(x);
        if v > val {
            val = v;
            arg = x;
        }
    }
    (arg, val)
}

/// Numerical supremum of `B_γ(B,λ)/(L^cl_{γ,2}λ^{γ+1})` over λ > 0.
///
/// Each Landau band is searched by golden section up to
/// `λ_max = B·max(10, 4(γ+1))`; beyond that the band maxima are monotone,
/// and probe bands near `λ = 10²B, 10³B, 10⁴B` decide whether the
/// supremum is only approached at infinity.
pub fn sup_ratio(gamma: MomentOrder, b: FieldStrength) -> SupRatio {
    let bv = b.value();
    let lambda_max = bv * f64::max(10.0, 4.0 * (gamma.value() + 1.0));
    let last_band = ((lambda_max / bv - 1.0) / 2.0).floor() as usize;
    let (mut arg, mut sup) = (f64::NAN, f64::NEG_INFINITY);
    for k in 0..=last_band {
        let (a, v) = band_max(b, gamma, k);
        if v > sup {
            sup = v;
            arg = a;
        }
    }
    let scan_sup = sup;
    let mut tail = f64::NEG_INFINITY;
    let mut increasing = true;
    for exp in 2..=4 {
        let k = ((10f64.powi(exp) - 1.0) / 2.0) as usize;
        let (_, v) = band_max(b, gamma, k);
        if v < tail {
            increasing = false;
        }
        tail = v;
    }
    if increasing && tail > scan_sup + 1e-12 {
        return SupRatio {
            sup: tail,
            argmax: Maximizer::Infinity,
        };
    }
    // maxima at the left edge of a band are right limits at a level
    let level = bv * (2.0 * ((arg / bv - 1.0) / 2.0).round() + 1.0);
    let argmax = if (arg - level).abs() <= 1e-9 * level {
        Maximizer::RightLimit(level)
    } else {
        Maximizer::At(arg)
    };
    SupRatio { sup, argmax }
}

/// Lieb–Thirring-derived excess factor `ρ_{γ,d}` for arbitrary magnetic
/// fields, 0 ≤ γ < 3/2, d ≥ 2.
pub fn rho_constant(gamma: MomentOrder, d: u32) -> Result<f64> {
    let g = gamma.value();
    if g >= 1.5 {
        return Err(Error::Domain(format!("rho is defined for 0 <= gamma < 3/2, got {g}")));
    }
    if d < 2 {
        return Err(Error::Domain(format!("rho is defined for d >= 2, got {d}")));
    }
    let df = d as f64;
    let gammas = gamma_fn(2.5) * gamma_fn(g + 0.5 * df + 1.0) / (gamma_fn(0.5 * (5.0 + df)) * gamma_fn(g + 1.0));
    Ok(gammas
        * 3f64.powf(-1.5)
        * (3.0 + df).powf(0.5 * (3.0 + df))
        * pow0(2.0 * g, g)
        * (2.0 * g + df).powf(-g - 0.5 * df))
}

/// `γ ∫₀^∞ B_0(B, λ−μ) μ^{γ−1} dμ`, evaluated by adaptive quadrature band
/// by band. Agrees with [`magnetic_symbol_2d`] for every γ > 0.
pub fn lift_moment(b: FieldStrength, lambda: f64, gamma: MomentOrder) -> Result<f64> {
    let g = gamma.value();
    if g == 0.0 {
        return Err(Error::Domain("lift_moment needs gamma > 0".into()));
    }
    let zero = MomentOrder(0.0);
    let bv = b.value();
    let levels = landau_level_count(b, lambda, zero);
    if levels == 0 {
        return Ok(0.0);
    }
    // breakpoints t_k = λ − B(2k+1), decreasing in k; B_0(B, λ−μ) is constant
    // between consecutive breakpoints
    let breaks: Vec<f64> = (0..levels).map(|k| lambda - bv * (2.0 * k as f64 + 1.0)).collect();
    let weight = |mu: f64| mu.powf(g - 1.0);
    let mut total = 0.0;
    for k in 0..levels {
        let hi = breaks[k];
        let lo = if k + 1 < levels { breaks[k + 1] } else { 0.0 };
        // B_0 on (lo, hi) counts levels 0..=k
        let height = magnetic_symbol_2d(b, lambda - 0.5 * (lo + hi), zero).value;
        let piece = if lo > 0.0 {
            integrate(weight, lo, hi, 1e-16, 1e-13)
        } else {
            // μ = hi·s^q removes the endpoint singularity of μ^{γ−1}
            let q = (1.0 / g).ceil().max(1.0);
            let f = |s: f64| q * hi.powf(g) * s.powf(q * g - 1.0);
            integrate(f, 0.0, 1.0, 1e-16, 1e-13)
        };
        total += height * piece;
    }
    Ok(g * total)
}

/// Tabulated function `λ ↦ f(λ)` on a strictly increasing grid, certified
/// convex by second differences.
#[derive(Debug, Clone)]
pub struct ConvexTable {
    lambdas: Vec<f64>,
    values: Vec<f64>,
}

impl ConvexTable {
    pub fn new(lambdas: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() || lambdas.len() != values.len() {
            return Err(Error::Data(format!(
                "table needs matching non-empty columns, got {} and {}",
                lambdas.len(),
                values.len()
            )));
        }
        if lambdas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Data("table grid must be strictly increasing".into()));
        }
        let slopes: Vec<f64> = lambdas
            .windows(2)
            .zip(values.windows(2))
            .map(|(l, v)| (v[1] - v[0]) / (l[1] - l[0]))
            .collect();
        let scale = slopes.iter().fold(1.0f64, |m, s| m.max(s.abs()));
        if let Some(i) = slopes.windows(2).position(|s| s[1] - s[0] < -1e-9 * scale) {
            return Err(Error::Data(format!(
                "table is not convex at knot {} (slopes {} then {})",
                i + 1,
                slopes[i],
                slopes[i + 1]
            )));
        }
        Ok(ConvexTable { lambdas, values })
    }

    pub fn from_fn(lambdas: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = lambdas.iter().map(|&l| f(l)).collect();
        ConvexTable::new(lambdas, values)
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LegendreValue {
    pub value: f64,
    pub argmax: f64,
    /// The objective still increases past the end of the table, so the
    /// true supremum may lie outside it.
    pub boundary_attained: bool,
}

/// `sup_λ (pλ − f(λ))` over the piecewise-linear interpolant of the table.
/// The objective is piecewise linear, so the supremum sits at a knot.
pub fn legendre_transform(table: &ConvexTable, p: f64) -> Result<LegendreValue> {
    if !(p >= 0.0) {
        return Err(Error::Domain(format!("Legendre slope must be >= 0, got {p}")));
    }
    let (l, f) = (&table.lambdas, &table.values);
    let (best, value) = l
        .iter()
        .zip(f)
        .map(|(&x, &y)| p * x - y)
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let n = l.len();
    let boundary_attained = if n == 1 {
        true
    } else if best == n - 1 {
        p > (f[n - 1] - f[n - 2]) / (l[n - 1] - l[n - 2])
    } else if best == 0 {
        p < (f[1] - f[0]) / (l[1] - l[0])
    } else {
        false
    };
    Ok(LegendreValue {
        value,
        argmax: l[best],
        boundary_attained,
    })
}
