//! Bound families for eigenvalue counts and Riesz means, ratio reports
//! against computed spectra, and the search for squares that violate the
//! Pólya-type estimate in a constant magnetic field.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{assemble, BoundaryCondition, GridDomain};
use crate::spectra::{eigs_below_with, riesz_mean, SolverOptions, SpectrumSlice};
use crate::symbol::{excess_factor, lcl_constant, magnetic_symbol_2d, magnetic_symbol_3d, rho_constant, FieldStrength, MomentOrder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundFamily {
    /// `N(λ) ≤ (4π)⁻¹ λ |Ω|`, proven for tiling domains without field.
    Polya,
    /// `tr(H − λ)₋^γ ≤ L^cl_{γ,2} λ^{γ+1} |Ω|`, γ ≥ 1, no field.
    Berezin,
    /// `Σ_{j≤N} λ_j ≥ 2πN²/|Ω|`, no field.
    Liyau,
    /// `R_γ L^cl_{γ,2} λ^{γ+1} |Ω|`, 0 ≤ γ < 1, any domain.
    Main1,
    /// `B_γ(B,λ) |Ω|`, 0 ≤ γ < 1, tiling domains.
    Main2,
    /// `N(λ) ≤ (4π)⁻¹ (λ + B) |Ω|`, tiling domains.
    Main1number0,
    /// `L^cl_{γ,2} λ^{γ+1} |Ω|` with field, γ ≥ 1.
    Elv,
    /// `B_γ(B,λ) |Ω|`, γ ≥ 1, any domain.
    Elv2,
    /// `Σ_{j≤N} λ_j ≥ 2πN²/|Ω|` with field.
    Elvevs,
    /// `B^{(3)}_γ(B,λ) |Ω|`, γ ≥ 1, three dimensions.
    D3Magnetic,
    /// `L^cl_{γ,3} λ^{γ+3/2} |Ω|`, γ ≥ 1/2, tiling domains in three dimensions.
    D3Semiclassical,
    /// `R_{γ+1/2} L^cl_{γ,3} λ^{γ+3/2} |Ω|`, 0 ≤ γ < 1/2, tiling domains in three dimensions.
    D3Excess,
    /// `ρ_{γ,2} L^cl_{γ,2} λ^{γ+1} |Ω|`, 0 ≤ γ < 3/2, arbitrary fields.
    AppendixA,
}

/// Field strengths for which a family is stated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FieldRange {
    Zero,
    Positive,
    Any,
}

/// Validity range of a bound family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Applicability {
    pub gamma_min: f64,
    /// Upper end of the γ range, `None` for unbounded.
    pub gamma_max: Option<f64>,
    pub gamma_max_inclusive: bool,
    pub tiling_only: bool,
    pub field: FieldRange,
    pub dimension: u32,
    /// The inequality bounds the spectral quantity from below (eigenvalue sums).
    pub lower_bound: bool,
}

impl BoundFamily {
    pub const ALL: [BoundFamily; 13] = [
        BoundFamily::Polya,
        BoundFamily::Berezin,
        BoundFamily::Liyau,
        BoundFamily::Main1,
        BoundFamily::Main2,
        BoundFamily::Main1number0,
        BoundFamily::Elv,
        BoundFamily::Elv2,
        BoundFamily::Elvevs,
        BoundFamily::D3Magnetic,
        BoundFamily::D3Semiclassical,
        BoundFamily::D3Excess,
        BoundFamily::AppendixA,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundFamily::Polya => "polya",
            BoundFamily::Berezin => "berezin",
            BoundFamily::Liyau => "liyau",
            BoundFamily::Main1 => "main1",
            BoundFamily::Main2 => "main2",
            BoundFamily::Main1number0 => "main1number0",
            BoundFamily::Elv => "elv",
            BoundFamily::Elv2 => "elv2",
            BoundFamily::Elvevs => "elvevs",
            BoundFamily::D3Magnetic => "d3_magnetic",
            BoundFamily::D3Semiclassical => "d3_semiclassical",
            BoundFamily::D3Excess => "d3_excess",
            BoundFamily::AppendixA => "appendixA",
        }
    }

    pub fn applicability(self) -> Applicability {
        let base = Applicability {
            gamma_min: 0.0,
            gamma_max: None,
            gamma_max_inclusive: false,
            tiling_only: false,
            field: FieldRange::Positive,
            dimension: 2,
            lower_bound: false,
        };
        let only_zero = Applicability {
            gamma_max: Some(0.0),
            gamma_max_inclusive: true,
            ..base
        };
        let sums = Applicability {
            gamma_min: 1.0,
            gamma_max: Some(1.0),
            gamma_max_inclusive: true,
            lower_bound: true,
            ..base
        };
        match self {
            BoundFamily::Polya => Applicability {
                tiling_only: true,
                field: FieldRange::Zero,
                ..only_zero
            },
            BoundFamily::Berezin => Applicability {
                gamma_min: 1.0,
                field: FieldRange::Zero,
                ..base
            },
            BoundFamily::Liyau => Applicability {
                field: FieldRange::Zero,
                ..sums
            },
            BoundFamily::Main1 => Applicability {
                gamma_max: Some(1.0),
                ..base
            },
            BoundFamily::Main2 => Applicability {
                gamma_max: Some(1.0),
                tiling_only: true,
                ..base
            },
            BoundFamily::Main1number0 => Applicability {
                tiling_only: true,
                field: FieldRange::Any,
                ..only_zero
            },
            BoundFamily::Elv | BoundFamily::Elv2 => Applicability { gamma_min: 1.0, ..base },
            BoundFamily::Elvevs => Applicability {
                field: FieldRange::Any,
                ..sums
            },
            BoundFamily::D3Magnetic => Applicability {
                gamma_min: 1.0,
                dimension: 3,
                ..base
            },
            BoundFamily::D3Semiclassical => Applicability {
                gamma_min: 0.5,
                tiling_only: true,
                dimension: 3,
                ..base
            },
            BoundFamily::D3Excess => Applicability {
                gamma_max: Some(0.5),
                tiling_only: true,
                dimension: 3,
                ..base
            },
            BoundFamily::AppendixA => Applicability {
                gamma_max: Some(1.5),
                field: FieldRange::Any,
                ..base
            },
        }
    }

    /// Whether γ lies in the family's stated range.
    pub fn admits_gamma(self, gamma: MomentOrder) -> bool {
        let a = self.applicability();
        let g = gamma.value();
        g >= a.gamma_min
            && match a.gamma_max {
                None => true,
                Some(hi) if a.gamma_max_inclusive => g <= hi,
                Some(hi) => g < hi,
            }
    }

    /// Whether the family is a theorem for this field strength and domain class.
    pub fn proven_for(self, b: f64, tiling: bool) -> bool {
        let a = self.applicability();
        let field_ok = match a.field {
            FieldRange::Zero => b == 0.0,
            FieldRange::Positive => b > 0.0,
            FieldRange::Any => true,
        };
        field_ok && (tiling || !a.tiling_only)
    }
}

impl fmt::Display for BoundFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BoundFamily::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown bound family `{s}`")))
    }
}

fn positive_field(family: BoundFamily, b: f64) -> Result<FieldStrength> {
    FieldStrength::new(b).map_err(|_| Error::Applicability(format!("{family} needs B > 0, got {b}")))
}

/// Right-hand side of a bound family. For the eigenvalue-sum families
/// (`liyau`, `elvevs`) `lambda` is the number of eigenvalues N.
pub fn evaluate_rhs(family: BoundFamily, gamma: MomentOrder, b: f64, lambda: f64, area: f64) -> Result<f64> {
    if !family.admits_gamma(gamma) {
        let a = family.applicability();
        return Err(Error::Applicability(format!(
            "{family} is stated for gamma in [{}, {}{}, got {}",
            a.gamma_min,
            a.gamma_max.map_or("inf".to_string(), |g| g.to_string()),
            if a.gamma_max_inclusive { "]" } else { ")" },
            gamma.value()
        )));
    }
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::Domain(format!("field strength must be >= 0, got {b}")));
    }
    if !(area > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("need area > 0 and finite λ, got area={area}, λ={lambda}")));
    }
    let g = gamma.value();
    let lam_plus = lambda.max(0.0);
    let lcl2 = || lcl_constant(gamma, 2).expect("d = 2");
    let lcl3 = || lcl_constant(gamma, 3).expect("d = 3");
    Ok(match family {
        BoundFamily::Polya => lam_plus * area / (4.0 * PI),
        BoundFamily::Main1number0 => (lambda + b).max(0.0) * area / (4.0 * PI),
        BoundFamily::Berezin | BoundFamily::Elv => lcl2() * lam_plus.powf(g + 1.0) * area,
        BoundFamily::Main1 => excess_factor(gamma)? * lcl2() * lam_plus.powf(g + 1.0) * area,
        BoundFamily::Main2 | BoundFamily::Elv2 => magnetic_symbol_2d(positive_field(family, b)?, lambda, gamma).value * area,
        BoundFamily::Liyau | BoundFamily::Elvevs => 2.0 * PI * lambda * lambda / area,
        BoundFamily::D3Magnetic => magnetic_symbol_3d(positive_field(family, b)?, lambda, gamma).value * area,
        BoundFamily::D3Semiclassical => lcl3() * lam_plus.powf(g + 1.5) * area,
        BoundFamily::D3Excess => {
            let r = excess_factor(MomentOrder::new(g + 0.5)?)?;
            r * lcl3() * lam_plus.powf(g + 1.5) * area
        }
        BoundFamily::AppendixA => rho_constant(gamma, 2)? * lcl2() * lam_plus.powf(g + 1.0) * area,
    })
}

/// Discretization allowance `α(h, λ) = C_disc·h²·λ`: the relative amount by
/// which five-point eigenvalues near λ may undershoot their continuum values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Allowance {
    pub c_disc: f64,
}

impl Allowance {
    pub fn alpha(&self, h: f64, lambda: f64) -> f64 {
        self.c_disc * h * h * lambda.abs()
    }

    /// Threshold above which a ratio counts as a genuine violation.
    pub fn threshold(&self, h: f64, lambda: f64) -> f64 {
        1.0 + 3.0 * self.alpha(h, lambda)
    }

    /// Calibrates `C_disc = max (λ_cont − λ_disc)/(h² λ_cont²)` on the
    /// field-free Dirichlet square of side π with `cells` cells per side,
    /// over all eigenvalues below `lambda_max`.
    pub fn calibrate(cells: usize, lambda_max: f64) -> Result<Self> {
        let side = PI;
        let h = side / cells as f64;
        let op = assemble(&GridDomain::square(side, h)?, 0.0, BoundaryCondition::Dirichlet)?;
        let slice = crate::spectra::eigs_below(&op, lambda_max)?;
        if !slice.complete {
            return Err(Error::Numerical("calibration spectrum is incomplete".into()));
        }
        let mut continuum: Vec<f64> = (1..cells)
            .flat_map(|j| (1..cells).map(move |k| (j * j + k * k) as f64))
            .collect();
        continuum.sort_by(f64::total_cmp);
        let c_disc = slice
            .eigenvalues
            .iter()
            .zip(&continuum)
            .map(|(d, c)| (c - d) / (h * h * c * c))
            .fold(0.0, f64::max);
        Ok(Allowance { c_disc })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flag {
    /// ratio ≤ 1.
    Ok,
    /// 1 < ratio ≤ 1 + 3α: attributable to discretization.
    Allowance,
    /// ratio > 1 + 3α.
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub family: BoundFamily,
    pub gamma: f64,
    pub b: f64,
    /// λ, or N for the eigenvalue-sum families.
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs/rhs` for upper bounds and `rhs/lhs` for the eigenvalue-sum
    /// lower bounds, so that ratio ≤ 1 always means the bound holds.
    pub ratio: f64,
    pub domain_area: f64,
    pub h: f64,
    pub flag: Flag,
    /// False when the family is evaluated outside the setting in which it is
    /// a theorem (a probe rather than a check).
    pub proven: bool,
    pub notes: String,
}

impl BoundReport {
    pub fn flag_label(&self) -> String {
        let base = match self.flag {
            Flag::Ok => "ok",
            Flag::Allowance => "allowance",
            Flag::Violation => "violation",
        };
        if self.proven {
            base.to_string()
        } else {
            format!("probe-{base}")
        }
    }
}

/// Context of a spectrum handed to [`bound_report`].
#[derive(Debug, Clone)]
pub struct ReportSetup {
    pub area: f64,
    pub b: f64,
    pub h: f64,
    pub tiling: bool,
    pub allowance: Allowance,
    /// Provenance of the left-hand sides, typically the spectrum file.
    pub notes: String,
}

fn flag_for(ratio: f64, allowance: &Allowance, h: f64, lambda: f64) -> Flag {
    if ratio <= 1.0 {
        Flag::Ok
    } else if ratio <= allowance.threshold(h, lambda) {
        Flag::Allowance
    } else {
        Flag::Violation
    }
}

/// One report per applicable (family, γ, λ), with left-hand sides from the
/// Riesz means of `slice`. Eigenvalue-sum families produce one row per N.
/// Pairs outside a family's γ range and three-dimensional families are
/// skipped; families evaluated outside their proven setting are marked as
/// probes.
pub fn bound_report(slice: &SpectrumSlice, setup: &ReportSetup, families: &[BoundFamily], gammas: &[f64], lambdas: &[f64]) -> Result<Vec<BoundReport>> {
    if !slice.complete {
        return Err(Error::Contract(format!("bound_report needs a complete spectrum slice below {}", slice.cutoff)));
    }
    if let Some(&l) = lambdas.iter().find(|&&l| l > slice.cutoff) {
        return Err(Error::Contract(format!("λ = {l} exceeds the slice cutoff {}", slice.cutoff)));
    }
    let mut out = Vec::new();
    for &family in families {
        let a = family.applicability();
        if a.dimension != 2 {
            continue;
        }
        let proven = family.proven_for(setup.b, setup.tiling);
        let needs_field = matches!(family, BoundFamily::Main2 | BoundFamily::Elv2 | BoundFamily::Main1 | BoundFamily::Elv);
        if needs_field && setup.b == 0.0 {
            continue;
        }
        if a.lower_bound {
            let one = MomentOrder::new(1.0)?;
            let mut sum = 0.0;
            for (k, &e) in slice.eigenvalues.iter().enumerate() {
                sum += e;
                let n = (k + 1) as f64;
                let rhs = evaluate_rhs(family, one, setup.b, n, setup.area)?;
                let ratio = rhs / sum;
                out.push(BoundReport {
                    family,
                    gamma: 1.0,
                    b: setup.b,
                    lambda: n,
                    lhs: sum,
                    rhs,
                    ratio,
                    domain_area: setup.area,
                    h: setup.h,
                    flag: flag_for(ratio, &setup.allowance, setup.h, e),
                    proven,
                    notes: setup.notes.clone(),
                });
            }
            continue;
        }
        for &g in gammas {
            let gamma = MomentOrder::new(g)?;
            if !family.admits_gamma(gamma) {
                continue;
            }
            for &lambda in lambdas {
                let lhs = riesz_mean(slice, lambda, gamma)?;
                let rhs = evaluate_rhs(family, gamma, setup.b, lambda, setup.area)?;
                let ratio = if rhs > 0.0 {
                    lhs / rhs
                } else if lhs == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                out.push(BoundReport {
                    family,
                    gamma: g,
                    b: setup.b,
                    lambda,
                    lhs,
                    rhs,
                    ratio,
                    domain_area: setup.area,
                    h: setup.h,
                    flag: flag_for(ratio, &setup.allowance, setup.h, lambda),
                    proven,
                    notes: setup.notes.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Writes reports as CSV `family,gamma,B,lambda,lhs,rhs,ratio,area,h,flag`.
pub fn write_reports(path: &Path, reports: &[BoundReport]) -> Result<()> {
    crate::io::write_atomic(path, &reports_csv(reports)?)
}

pub fn reports_csv(reports: &[BoundReport]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["family", "gamma", "B", "lambda", "lhs", "rhs", "ratio", "area", "h", "flag"])?;
    for r in reports {
        w.write_record([
            r.family.name().to_string(),
            r.gamma.to_string(),
            r.b.to_string(),
            r.lambda.to_string(),
            r.lhs.to_string(),
            r.rhs.to_string(),
            r.ratio.to_string(),
            r.domain_area.to_string(),
            r.h.to_string(),
            r.flag_label(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::io("<report buffer>", e.into_error()))
}

/// `min_N (Σ_{j≤N} λ_j)·|Ω|/(2πN²)` over the eigenvalues in the slice.
pub fn liyau_check(slice: &SpectrumSlice, area: f64) -> Result<f64> {
    if !slice.complete {
        return Err(Error::Contract("liyau_check needs a complete spectrum slice".into()));
    }
    if slice.eigenvalues.is_empty() {
        return Err(Error::Contract("liyau_check needs at least one eigenvalue".into()));
    }
    let mut sum = 0.0;
    let mut best = f64::INFINITY;
    for (k, e) in slice.eigenvalues.iter().enumerate() {
        sum += e;
        let n = (k + 1) as f64;
        best = best.min(sum * area / (2.0 * PI * n * n));
    }
    Ok(best)
}

/// `Σ_{n≥1} Σ_j (λ − λ_j − (πn/ℓ)²)₊^γ` for the product of the planar domain
/// with an interval of length ℓ (Dirichlet conditions on both factors).
pub fn product_3d_moment(slice2d: &SpectrumSlice, interval_length: f64, lambda: f64, gamma: MomentOrder) -> Result<f64> {
    if gamma.value() < 0.5 {
        return Err(Error::Applicability(format!(
            "the product bound is stated for gamma >= 1/2, got {}",
            gamma.value()
        )));
    }
    product_moment(slice2d, interval_length, lambda, gamma)
}

/// [`product_3d_moment`] without the γ ≥ 1/2 restriction; used for the
/// three-dimensional families stated for smaller γ on boxes.
pub fn product_moment(slice2d: &SpectrumSlice, interval_length: f64, lambda: f64, gamma: MomentOrder) -> Result<f64> {
    if !slice2d.complete {
        return Err(Error::Contract("product moment needs a complete 2D spectrum slice".into()));
    }
    if !(interval_length > 0.0) {
        return Err(Error::Domain(format!("interval length must be > 0, got {interval_length}")));
    }
    let g = gamma.value();
    let mut total = 0.0;
    for n in 1.. {
        let mode = (PI * n as f64 / interval_length).powi(2);
        let mu = lambda - mode;
        if mu <= slice2d.eigenvalues.first().copied().unwrap_or(f64::INFINITY) {
            break;
        }
        // terms with λ_j < λ − mode need λ − mode ≤ cutoff
        if mu > slice2d.cutoff {
            return Err(Error::Contract(format!(
                "λ − (π/ℓ)² = {mu} exceeds the 2D slice cutoff {}",
                slice2d.cutoff
            )));
        }
        total += slice2d
            .eigenvalues
            .iter()
            .filter(|&&e| e < mu)
            .map(|&e| if g == 0.0 { 1.0 } else { (mu - e).powf(g) })
            .sum::<f64>();
    }
    Ok(total)
}

/// Resource limits for [`counterexample_search`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    /// Largest flux quantum (2π)⁻¹L²B on the ladder 16, 32, 64, ...
    pub max_flux: u32,
    pub max_unknowns: usize,
    pub max_wall: Duration,
    /// Resolution policy: h is the largest L/n with B·h² ≤ flux_res.
    pub flux_res: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_flux: 128,
            max_unknowns: 100_000,
            max_wall: Duration::from_secs(900),
            flux_res: 0.02,
        }
    }
}

/// One evaluated (flux, λ) point of the search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rung {
    pub flux: u32,
    pub side: f64,
    pub h: f64,
    pub unknowns: usize,
    pub lambda: f64,
    pub lhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleResult {
    pub gamma: f64,
    pub b: f64,
    pub epsilon: f64,
    /// Side of the square.
    pub side: f64,
    pub lambda: f64,
    /// `tr(H − λ)₋^γ / (L^cl_{γ,2} λ^{γ+1} L²)`.
    pub achieved_ratio: f64,
    /// `(1 − ε) R_γ`.
    pub target: f64,
    pub grid_h: f64,
    pub flux: u32,
    pub lhs: f64,
    pub certified: bool,
    /// Best ratio per flux is nondecreasing along the ladder.
    pub monotone: bool,
    pub rungs: Vec<Rung>,
    #[serde(skip)]
    pub spectrum: Option<SpectrumSlice>,
}

/// Grid for the flux-quantized square `L = √(2π·flux/B)` with
/// `B·h² ≤ flux_res` and `L/h` integral.
pub fn flux_square(b: f64, flux: u32, flux_res: f64) -> (f64, usize, f64) {
    let side = (2.0 * PI * flux as f64 / b).sqrt();
    let cells = (side * (b / flux_res).sqrt() - 1e-9).ceil() as usize;
    (side, cells, side / cells as f64)
}

/// Grows flux-quantized Dirichlet squares until
/// `tr(H − λ)₋^γ ≥ (1−ε) R_γ L^cl_{γ,2} L² λ^{γ+1}` or the budget runs out.
/// λ = B(γ+1) for γ > 0; for γ = 0 the points λ = B(1+δ), δ ∈ {0.2, 0.1,
/// 0.05} are tried on every rung.
pub fn counterexample_search(gamma: MomentOrder, b: FieldStrength, epsilon: f64, budget: &Budget, opts: &SolverOptions) -> Result<CounterexampleResult> {
    let g = gamma.value();
    if g >= 1.0 {
        return Err(Error::Applicability(format!("the counterexample is stated for 0 <= gamma < 1, got {g}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let bv = b.value();
    let target = (1.0 - epsilon) * excess_factor(gamma)?;
    let lcl = lcl_constant(gamma, 2)?;
    let lambdas: Vec<f64> = if g == 0.0 {
        [0.2, 0.1, 0.05].iter().map(|d| bv * (1.0 + d)).collect()
    } else {
        vec![bv * (g + 1.0)]
    };
    let start = Instant::now();
    let mut rungs = Vec::new();
    let mut best: Option<(Rung, SpectrumSlice)> = None;
    let mut per_flux_best = Vec::new();
    let mut flux = 16u32;
    while flux <= budget.max_flux {
        let (side, cells, h) = flux_square(bv, flux, budget.flux_res);
        let unknowns = (cells - 1) * (cells - 1);
        if unknowns > budget.max_unknowns || start.elapsed() > budget.max_wall {
            break;
        }
        let op = assemble(&GridDomain::square(side, h)?, bv, BoundaryCondition::Dirichlet)?;
        let cutoff = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slice = eigs_below_with(&op, cutoff, opts)?;
        let area = op.domain().area();
        let mut rung_best = f64::NEG_INFINITY;
        for &lambda in &lambdas {
            // an incomplete slice cannot certify anything; record ratio 0
            let lhs = if slice.complete { riesz_mean(&slice, lambda, gamma)? } else { 0.0 };
            let ratio = lhs / (lcl * lambda.powf(g + 1.0) * area);
            let rung = Rung {
                flux,
                side,
                h,
                unknowns: op.dim(),
                lambda,
                lhs,
                ratio,
            };
            rung_best = rung_best.max(ratio);
            if best.as_ref().is_none_or(|(r, _)| ratio > r.ratio) {
                best = Some((rung.clone(), slice.clone()));
            }
            rungs.push(rung);
        }
        per_flux_best.push(rung_best);
        if best.as_ref().is_some_and(|(r, s)| s.complete && r.ratio >= target) {
            break;
        }
        flux *= 2;
    }
    let monotone = per_flux_best.windows(2).all(|w| w[1] >= w[0]);
    let Some((rung, slice)) = best else {
        return Ok(CounterexampleResult {
            gamma: g,
            b: bv,
            epsilon,
            side: 0.0,
            lambda: lambdas[0],
            achieved_ratio: 0.0,
            target,
            grid_h: 0.0,
            flux: 0,
            lhs: 0.0,
            certified: false,
            monotone,
            rungs,
            spectrum: None,
        });
    };
    Ok(CounterexampleResult {
        gamma: g,
        b: bv,
        epsilon,
        side: rung.side,
        lambda: rung.lambda,
        achieved_ratio: rung.ratio,
        target,
        grid_h: rung.h,
        flux: rung.flux,
        lhs: rung.lhs,
        certified: slice.complete && rung.ratio >= target,
        monotone,
        rungs,
        spectrum: Some(slice),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mo(g: f64) -> MomentOrder {
        MomentOrder::new(g).unwrap()
    }

    fn slice_of(ev: &[f64], cutoff: f64) -> SpectrumSlice {
        SpectrumSlice {
            cutoff,
            eigenvalues: ev.to_vec(),
            residual_norms: vec![0.0; ev.len()],
            complete: true,
            count: ev.len(),
            seed: 0,
            pivot_margin: 1.0,
        }
    }

    #[test]
    fn rhs_examples() {
        let r = evaluate_rhs(BoundFamily::Polya, mo(0.0), 0.0, 4.0 * PI, 1.0).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        let r = evaluate_rhs(BoundFamily::Main2, mo(0.0), 1.0, 3.5, PI).unwrap();
        assert!((r - 1.0).abs() < 1e-14);
        let r = evaluate_rhs(BoundFamily::Main1number0, mo(0.0), 1.0, 1.0, 4.0 * PI).unwrap();
        assert!((r - 2.0).abs() < 1e-14);
        let r = evaluate_rhs(BoundFamily::Liyau, mo(1.0), 0.0, 3.0, 2.0).unwrap();
        assert!((r - 9.0 * PI).abs() < 1e-12);
        // main1 at γ = 1/2 carries R_{1/2} = 2/√3 over the classical term
        let main1 = evaluate_rhs(BoundFamily::Main1, mo(0.5), 1.0, 2.0, 1.0).unwrap();
        let berezin_like = lcl_constant(mo(0.5), 2).unwrap() * 2f64.powf(1.5);
        assert!((main1 / berezin_like - 2.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_families_are_refused() {
        for (family, g) in [
            (BoundFamily::Berezin, 0.5),
            (BoundFamily::Main1, 1.0),
            (BoundFamily::Main2, 1.5),
            (BoundFamily::Elv2, 0.5),
            (BoundFamily::Polya, 1.0),
            (BoundFamily::D3Excess, 0.5),
            (BoundFamily::D3Semiclassical, 0.25),
            (BoundFamily::AppendixA, 1.5),
        ] {
            assert!(
                matches!(evaluate_rhs(family, mo(g), 1.0, 3.0, 1.0), Err(Error::Applicability(_))),
                "{family} at {g}"
            );
        }
        assert!(matches!(evaluate_rhs(BoundFamily::Main2, mo(0.0), 0.0, 3.0, 1.0), Err(Error::Applicability(_))));
    }

    #[test]
    fn family_names_round_trip() {
        for f in BoundFamily::ALL {
            assert_eq!(f.name().parse::<BoundFamily>().unwrap(), f);
        }
        assert!("nope".parse::<BoundFamily>().is_err());
    }

    #[test]
    fn sharpness_point_and_orderings() {
        let b = 1.3;
        for g in [0.0, 0.25, 0.5, 0.75] {
            // at λ = B(γ+1) the tiling bound equals the arbitrary-domain bound
            let lambda = b * (g + 1.0) + if g == 0.0 { 1e-9 } else { 0.0 };
            let m2 = evaluate_rhs(BoundFamily::Main2, mo(g), b, lambda, 1.0).unwrap();
            let m1 = evaluate_rhs(BoundFamily::Main1, mo(g), b, lambda, 1.0).unwrap();
            assert!(m2 <= m1 * (1.0 + 1e-8));
            if g > 0.0 {
                assert!((m2 - m1).abs() <= 1e-10 * m1);
            }
        }
        for g in [1.0, 1.5, 2.0] {
            for k in 1..200 {
                let lambda = 0.05 * k as f64;
                let e2 = evaluate_rhs(BoundFamily::Elv2, mo(g), b, lambda, 1.0).unwrap();
                let e1 = evaluate_rhs(BoundFamily::Elv, mo(g), b, lambda, 1.0).unwrap();
                assert!(e2 <= e1 * (1.0 + 1e-12));
            }
        }
        for k in 0..100 {
            let lambda = b * (1.0 + 0.1 * k as f64);
            let n0 = evaluate_rhs(BoundFamily::Main1number0, mo(0.0), b, lambda, 1.0).unwrap();
            let m1 = evaluate_rhs(BoundFamily::Main1, mo(0.0), b, lambda, 1.0).unwrap();
            assert!(n0 <= m1 * (1.0 + 1e-14));
        }
    }

    #[test]
    fn liyau_saturating_input() {
        let area = 3.0;
        // λ_j = 2π(2j−1)/|Ω| gives Σ_{j≤N} λ_j = 2πN²/|Ω| exactly
        let ev: Vec<f64> = (1..=20).map(|j| 2.0 * PI * (2 * j - 1) as f64 / area).collect();
        let r = liyau_check(&slice_of(&ev, 1e3), area).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!(matches!(liyau_check(&slice_of(&[], 1.0), area), Err(Error::Contract(_))));
    }

    #[test]
    fn product_moment_examples() {
        let s = slice_of(&[5.0], 100.0);
        assert_eq!(product_3d_moment(&s, PI, 5.5, mo(1.0)).unwrap(), 0.0);
        assert!((product_3d_moment(&s, PI, 7.0, mo(1.0)).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(product_3d_moment(&s, PI, 7.0, mo(0.25)), Err(Error::Applicability(_))));
    }

    #[test]
    fn report_flags_and_csv() {
        let s = slice_of(&[1.0, 3.0], 10.0);
        let setup = ReportSetup {
            area: 1.0,
            b: 0.0,
            h: 0.1,
            tiling: true,
            allowance: Allowance { c_disc: 1.0 / 12.0 },
            notes: "toy".into(),
        };
        let reports = bound_report(&s, &setup, &[BoundFamily::Polya, BoundFamily::Liyau], &[0.0, 1.0], &[2.0, 4.0]).unwrap();
        // polya only admits γ = 0; liyau gives one row per eigenvalue
        assert_eq!(reports.len(), 4);
        let polya = &reports[0];
        assert_eq!(polya.lhs, 1.0);
        assert_eq!(polya.flag, Flag::Violation);
        let text = String::from_utf8(reports_csv(&reports).unwrap()).unwrap();
        assert!(text.starts_with("family,gamma,B,lambda,lhs,rhs,ratio,area,h,flag\npolya,0,0,2,1,"));
        let mut incomplete = s.clone();
        incomplete.complete = false;
        assert!(matches!(bound_report(&incomplete, &setup, &[BoundFamily::Polya], &[0.0], &[2.0]), Err(Error::Contract(_))));
    }

    #[test]
    fn calibrated_allowance_is_near_one_twelfth() {
        let a = Allowance::calibrate(24, 60.0).unwrap();
        assert!(a.c_disc > 0.05 && a.c_disc < 1.0 / 12.0 + 1e-3, "{}", a.c_disc);
    }

    #[test]
    fn counterexample_trivial_target() {
        let r = counterexample_search(mo(0.0), FieldStrength::new(1.0).unwrap(), 0.99, &Budget::default(), &SolverOptions::default()).unwrap();
        assert!(r.certified);
        assert_eq!(r.flux, 16);
        assert!(r.achieved_ratio >= r.target);
        let bad = counterexample_search(mo(1.0), FieldStrength::new(1.0).unwrap(), 0.5, &Budget::default(), &SolverOptions::default());
        assert!(matches!(bad, Err(Error::Applicability(_))));
    }
}
