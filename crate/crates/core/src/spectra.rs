//! Certified eigenvalue counts, low-lying eigenvalues, and Riesz means.
//!
//! Counting uses Sylvester's law of inertia on a banded `LDLᴴ` factorization
//! of `H − λI`. Eigenvalues come from a dense Hermitian solve for small
//! operators and from spectrum slicing with shift-invert block Krylov
//! iterations otherwise. Completeness of a slice is always certified by an
//! inertia count.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::MagneticOperator;
use crate::symbol::MomentOrder;

/// Maximum number of right-shifts attempted when a pivot is too small.
const MAX_PIVOT_RETRIES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMethod {
    Inertia,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountCertificate {
    /// Point at which the count was taken, after any pivot-driven shift.
    pub lambda: f64,
    pub count: usize,
    pub method: CountMethod,
    pub pivot_margin: f64,
}

/// Smallest admissible pivot magnitude for an operator with spacing `h`.
pub fn pivot_tolerance(h: f64) -> f64 {
    1e-10 * 4.0 / (h * h)
}

/// Banded `LDLᴴ` factorization without pivoting. Row `j` of `L` is stored in
/// `l[j*w .. (j+1)*w]`, entry `L[j][k]` at offset `k + w − j`.
pub(crate) struct BandLdl {
    n: usize,
    w: usize,
    l: Vec<Complex64>,
    d: Vec<f64>,
}

pub(crate) struct SmallPivot;

impl BandLdl {
    /// Factorizes `op − shift·I`; aborts as soon as a pivot falls below `tau`.
    pub(crate) fn factor(op: &MagneticOperator, shift: f64, tau: f64) -> std::result::Result<Self, SmallPivot> {
        let n = op.dim();
        let w = op.bandwidth();
        let mut l = vec![Complex64::new(0.0, 0.0); n * w];
        let mut d = vec![0.0; n];
        let mut u = vec![Complex64::new(0.0, 0.0); w];
        for j in 0..n {
            let (done, rest) = l.split_at_mut(j * w);
            let row = &mut rest[..w];
            let mut diag = -shift;
            let (cols, vals) = op.row(j);
            for (&k, &v) in cols.iter().zip(vals) {
                if k < j {
                    row[k + w - j] = v;
                } else if k == j {
                    diag += v.re;
                }
            }
            let lo = j.saturating_sub(w);
            let base = lo + w - j;
            for k in lo..j {
                let kk = k + w - j;
                let lk = &done[k * w + (lo + w - k)..(k + 1) * w];
                let mut s = row[kk];
                for (uu, lkm) in u[base..kk].iter().zip(lk) {
                    s -= uu * lkm.conj();
                }
                row[kk] = s / d[k];
                u[kk] = row[kk] * d[k];
            }
            let mut dj = diag;
            for (uu, r) in u[base..].iter().zip(&row[base..]) {
                dj -= (uu * r.conj()).re;
            }
            if dj.abs() < tau || !dj.is_finite() {
                return Err(SmallPivot);
            }
            d[j] = dj;
        }
        Ok(BandLdl { n, w, l, d })
    }

    pub(crate) fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&x| x < 0.0).count()
    }

    pub(crate) fn pivot_margin(&self) -> f64 {
        self.d.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()))
    }

    /// Solves `L D Lᴴ x = b` in place.
    pub(crate) fn solve(&self, x: &mut [Complex64]) {
        let (n, w) = (self.n, self.w);
        for j in 0..n {
            let lo = j.saturating_sub(w);
            let row = &self.l[j * w + (lo + w - j)..(j + 1) * w];
            let mut s = x[j];
            for (ljk, xk) in row.iter().zip(&x[lo..j]) {
                s -= ljk * xk;
            }
            x[j] = s;
        }
        for (xj, dj) in x.iter_mut().zip(&self.d) {
            *xj /= dj;
        }
        for i in (0..n).rev() {
            let lo = i.saturating_sub(w);
            let xi = x[i];
            let row = &self.l[i * w + (lo + w - i)..(i + 1) * w];
            for (xk, lik) in x[lo..i].iter_mut().zip(row) {
                *xk -= lik.conj() * xi;
            }
        }
    }
}

/// Factorizes `op − λ·I`, shifting λ right by `10·τ_pivot` while a pivot is
/// smaller than `τ_pivot`. Returns the factorization and the λ actually used.
pub(crate) fn factor_shifted(op: &MagneticOperator, lambda: f64) -> Result<(BandLdl, f64)> {
    let tau = pivot_tolerance(op.h());
    let delta = 10.0 * tau;
    let mut at = lambda;
    for _ in 0..=MAX_PIVOT_RETRIES {
        match BandLdl::factor(op, at, tau) {
            Ok(f) => return Ok((f, at)),
            Err(SmallPivot) => at += delta,
        }
    }
    Err(Error::Numerical(format!(
        "LDLᴴ factorization of H − λI hit pivots below {tau:e} for λ in [{lambda}, {at}] ({} retries, n = {}, bandwidth = {})",
        MAX_PIVOT_RETRIES,
        op.dim(),
        op.bandwidth()
    )))
}

/// Number of eigenvalues of `op` strictly below `lambda`, by inertia.
pub fn count_below(op: &MagneticOperator, lambda: f64) -> Result<CountCertificate> {
    if !lambda.is_finite() {
        return Err(Error::Domain(format!("count_below needs a finite λ, got {lambda}")));
    }
    let (f, at) = factor_shifted(op, lambda)?;
    Ok(CountCertificate {
        lambda: at,
        count: f.negative_pivots(),
        method: CountMethod::Inertia,
        pivot_margin: f.pivot_margin(),
    })
}

/// All eigenvalues of `op`, ascending, from a dense Hermitian solve.
pub fn dense_spectrum(op: &MagneticOperator) -> Vec<f64> {
    let mut ev: Vec<f64> = op.to_dense().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Dense-diagonalization count, the independent oracle for [`count_below`].
pub fn count_below_dense(op: &MagneticOperator, lambda: f64) -> Result<CountCertificate> {
    if !lambda.is_finite() {
        return Err(Error::Domain(format!("count_below needs a finite λ, got {lambda}")));
    }
    let ev = dense_spectrum(op);
    let count = ev.partition_point(|&e| e < lambda);
    let margin = ev.iter().fold(f64::INFINITY, |m, e| m.min((e - lambda).abs()));
    Ok(CountCertificate {
        lambda,
        count,
        method: CountMethod::Dense,
        pivot_margin: margin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSlice {
    pub cutoff: f64,
    pub eigenvalues: Vec<f64>,
    pub residual_norms: Vec<f64>,
    pub complete: bool,
    /// Inertia count at the cutoff.
    pub count: usize,
    pub seed: u64,
    pub pivot_margin: f64,
}

#[derive(Serialize)]
struct SliceSidecar {
    cutoff: f64,
    count: usize,
    complete: bool,
    seed: u64,
    pivot_margin: f64,
}

impl SpectrumSlice {
    /// Writes `index,eigenvalue,residual` rows and a JSON sidecar at
    /// `<path>.json`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["index", "eigenvalue", "residual"])?;
        for (k, (e, r)) in self.eigenvalues.iter().zip(&self.residual_norms).enumerate() {
            w.write_record([k.to_string(), e.to_string(), r.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
        crate::io::write_atomic(path, &bytes)?;
        let sidecar = SliceSidecar {
            cutoff: self.cutoff,
            count: self.count,
            complete: self.complete,
            seed: self.seed,
            pivot_margin: self.pivot_margin,
        };
        let mut side = path.as_os_str().to_owned();
        side.push(".json");
        crate::io::write_atomic(Path::new(&side), serde_json::to_string_pretty(&sidecar)?.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Operators up to this size are diagonalized densely.
    pub dense_threshold: usize,
    pub seed: u64,
    /// Residual acceptance relative to `‖H‖₁`.
    pub residual_tol: f64,
    /// Target number of eigenvalues per spectral slice.
    pub slice_size: usize,
    pub block_size: usize,
    pub max_restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            dense_threshold: 1500,
            seed: 0x5eed,
            residual_tol: 1e-10,
            slice_size: 40,
            block_size: 8,
            max_restarts: 40,
        }
    }
}

/// All eigenvalues of `op` below `cutoff` with default options.
pub fn eigs_below(op: &MagneticOperator, cutoff: f64) -> Result<SpectrumSlice> {
    eigs_below_with(op, cutoff, &SolverOptions::default())
}

pub fn eigs_below_with(op: &MagneticOperator, cutoff: f64, opts: &SolverOptions) -> Result<SpectrumSlice> {
    if !cutoff.is_finite() {
        return Err(Error::Domain(format!("eigs_below needs a finite cutoff, got {cutoff}")));
    }
    let cert = count_below(op, cutoff)?;
    let (eigenvalues, residual_norms) = if cert.count == 0 {
        (Vec::new(), Vec::new())
    } else if op.dim() <= opts.dense_threshold {
        dense_below(op, cutoff)
    } else {
        sliced_below(op, cert, opts)?
    };
    Ok(SpectrumSlice {
        cutoff,
        complete: eigenvalues.len() == cert.count,
        eigenvalues,
        residual_norms,
        count: cert.count,
        seed: opts.seed,
        pivot_margin: cert.pivot_margin,
    })
}

fn dense_below(op: &MagneticOperator, cutoff: f64) -> (Vec<f64>, Vec<f64>) {
    let h = op.to_dense();
    let eig = h.clone().symmetric_eigen();
    let mut pairs: Vec<(f64, usize)> = eig.eigenvalues.iter().copied().enumerate().map(|(k, e)| (e, k)).filter(|p| p.0 < cutoff).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let residuals = pairs
        .iter()
        .map(|&(e, k)| {
            let v = eig.eigenvectors.column(k);
            (&h * v - v * Complex64::new(e, 0.0)).norm()
        })
        .collect();
    (pairs.into_iter().map(|p| p.0).collect(), residuals)
}

struct Interval {
    a: f64,
    ca: usize,
    b: f64,
    cb: usize,
}

fn sliced_below(op: &MagneticOperator, top: CountCertificate, opts: &SolverOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let a0 = op.gershgorin_lower().min(0.0) - 1.0;
    let scale = op.norm1();
    let mut todo = vec![Interval {
        a: a0,
        ca: 0,
        b: top.lambda,
        cb: top.count,
    }];
    // move the lower end of the bottom slice up to the spectrum so the shift
    // sits near the eigenvalues it has to resolve
    for _ in 0..6 {
        let bottom = todo.last_mut().expect("bottom interval");
        let mid = 0.5 * (bottom.a + bottom.b);
        let cm = count_below(op, mid)?;
        if cm.count > 0 {
            break;
        }
        bottom.a = cm.lambda;
    }
    let mut slices = Vec::new();
    while let Some(iv) = todo.pop() {
        let c = iv.cb - iv.ca;
        if c == 0 {
            continue;
        }
        // clusters narrower than this are solved as one slice
        if c <= opts.slice_size || iv.b - iv.a < 1e-6 * scale {
            slices.push(iv);
            continue;
        }
        let mid = 0.5 * (iv.a + iv.b);
        let cm = count_below(op, mid)?;
        todo.push(Interval {
            a: cm.lambda,
            ca: cm.count,
            b: iv.b,
            cb: iv.cb,
        });
        todo.push(Interval {
            a: iv.a,
            ca: iv.ca,
            b: cm.lambda,
            cb: cm.count,
        });
    }
    let results: Vec<Result<(Vec<f64>, Vec<f64>)>> = slices
        .par_iter()
        .enumerate()
        .map(|(k, iv)| {
            let seed = opts.seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            solve_slice(op, iv, opts, seed, scale)
        })
        .collect();
    let mut pairs = Vec::with_capacity(top.count);
    for r in results {
        let (e, res) = r?;
        pairs.extend(e.into_iter().zip(res));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

/// Orthogonalizes `x` against `basis` (two Gram-Schmidt passes) and
/// normalizes; returns `false` when `x` lies numerically in the span.
fn orthonormalize(x: &mut [Complex64], basis: &[Vec<Complex64>]) -> bool {
    let start = norm(x);
    for _ in 0..2 {
        for v in basis {
            let c = dot(v, x);
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi -= c * vi;
            }
        }
    }
    let nx = norm(x);
    if !(nx > 1e-10 * start) || nx == 0.0 {
        return false;
    }
    for xi in x.iter_mut() {
        *xi /= nx;
    }
    true
}

/// Eigenpairs of `op` in `[iv.a, iv.b)` by block Krylov iteration on
/// `(H − σI)⁻¹` with σ at the slice midpoint, full reorthogonalization and
/// thick restarts. Ritz pairs come from Rayleigh–Ritz with `H` itself.
fn solve_slice(op: &MagneticOperator, iv: &Interval, opts: &SolverOptions, seed: u64, scale: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = op.dim();
    let want = iv.cb - iv.ca;
    let tol = opts.residual_tol * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = iv.b - iv.a;
    let mut sigma = 0.5 * (iv.a + iv.b);
    let fac = loop {
        match BandLdl::factor(op, sigma, pivot_tolerance(op.h())) {
            Ok(f) => break f,
            Err(SmallPivot) => sigma += 1e-7 * width.max(1e-12 * scale),
        }
    };
    let bs = opts.block_size.clamp(1, want.max(1));
    let max_dim = n.min(4 * want + bs.max(32));
    // Ritz vectors kept across a restart: the slice plus a buffer of the
    // nearest outside pairs, which shields the slice edges
    let keep_max = (want + (2 * want).max(bs)).min(max_dim.saturating_sub(bs));
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(max_dim);
    // projected matrix Vᴴ H V, grown column by column
    let mut g: Vec<Vec<Complex64>> = Vec::with_capacity(max_dim);
    let mut block: Vec<Vec<Complex64>> = (0..bs).map(|_| random_vector(n, &mut rng)).collect();
    let mut best: Vec<(f64, f64)> = Vec::new();
    let mut restarts = 0;
    let mut checked_early = false;
    let mut hx = vec![Complex64::new(0.0, 0.0); n];

    loop {
        let mut next = Vec::with_capacity(bs);
        for mut x in block.drain(..) {
            if basis.len() >= max_dim {
                break;
            }
            fac.solve(&mut x);
            let mut ok = orthonormalize(&mut x, &basis);
            for _ in 0..3 {
                if ok {
                    break;
                }
                x = random_vector(n, &mut rng);
                ok = orthonormalize(&mut x, &basis);
            }
            if !ok {
                continue;
            }
            op.apply(&x, &mut hx);
            let col: Vec<Complex64> = basis.iter().map(|v| dot(v, &hx)).chain(std::iter::once(Complex64::new(dot(&x, &hx).re, 0.0))).collect();
            g.push(col);
            next.push(x.clone());
            basis.push(x);
        }
        block = next;
        let full = basis.len() >= max_dim || block.is_empty();
        let early = !checked_early && basis.len() >= want + 2 * bs;
        if !full && !early {
            continue;
        }
        checked_early = true;

        let k = basis.len();
        let mut m = DMatrix::<Complex64>::zeros(k, k);
        for (j, col) in g.iter().enumerate() {
            for (i, &z) in col.iter().enumerate() {
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        let eig = m.symmetric_eigen();
        let ritz_vector = |c: usize| -> Vec<Complex64> {
            let mut x = vec![Complex64::new(0.0, 0.0); n];
            for (yi, v) in eig.eigenvectors.column(c).iter().zip(&basis) {
                for (xr, vi) in x.iter_mut().zip(v) {
                    *xr += yi * vi;
                }
            }
            x
        };
        let mut inside: Vec<(usize, f64, Vec<Complex64>, f64)> = Vec::new();
        for c in 0..k {
            let theta = eig.eigenvalues[c];
            if theta >= iv.a && theta < iv.b {
                let x = ritz_vector(c);
                op.apply(&x, &mut hx);
                let res = x.iter().zip(&hx).map(|(xi, hi)| (hi - xi * theta).norm_sqr()).sum::<f64>().sqrt();
                inside.push((c, theta, x, res));
            }
        }
        let converged: Vec<(f64, f64)> = inside.iter().filter(|p| p.3 <= tol).map(|p| (p.1, p.3)).collect();
        if converged.len() >= best.len() {
            best = converged;
        }
        if best.len() == want || k == n {
            break;
        }
        if !full {
            continue;
        }
        if restarts == opts.max_restarts {
            break;
        }
        restarts += 1;

        // thick restart from the kept Ritz vectors; expansion continues from
        // the unconverged in-slice directions nearest the shift
        let mut outside: Vec<usize> = (0..k).filter(|&c| !(eig.eigenvalues[c] >= iv.a && eig.eigenvalues[c] < iv.b)).collect();
        outside.sort_by(|&x, &y| (eig.eigenvalues[x] - sigma).abs().total_cmp(&(eig.eigenvalues[y] - sigma).abs()));
        let extra = keep_max.saturating_sub(inside.len());
        let mut unconverged: Vec<&(usize, f64, Vec<Complex64>, f64)> = inside.iter().filter(|p| p.3 > tol).collect();
        unconverged.sort_by(|x, y| (x.1 - sigma).abs().total_cmp(&(y.1 - sigma).abs()));
        block = unconverged.iter().take(bs).map(|p| p.2.clone()).collect();
        while block.len() < bs {
            block.push(random_vector(n, &mut rng));
        }
        let kept: Vec<(f64, Vec<Complex64>)> = inside
            .into_iter()
            .map(|p| (p.1, p.2))
            .chain(outside.into_iter().take(extra).map(|c| (eig.eigenvalues[c], ritz_vector(c))))
            .collect();
        basis.clear();
        g.clear();
        for (i, (theta, x)) in kept.into_iter().enumerate() {
            let mut col = vec![Complex64::new(0.0, 0.0); i + 1];
            col[i] = Complex64::new(theta, 0.0);
            g.push(col);
            basis.push(x);
        }
    }
    best.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(best.into_iter().unzip())
}

fn require_complete(slice: &SpectrumSlice) -> Result<()> {
    if !slice.complete {
        return Err(Error::Contract(format!(
            "spectrum slice below {} is incomplete ({} of {} eigenvalues)",
            slice.cutoff,
            slice.eigenvalues.len(),
            slice.count
        )));
    }
    Ok(())
}

/// `Σ_{λ_j < λ} (λ − λ_j)^γ`; the count for `γ = 0`.
pub fn riesz_mean(slice: &SpectrumSlice, lambda: f64, gamma: MomentOrder) -> Result<f64> {
    require_complete(slice)?;
    if lambda > slice.cutoff {
        return Err(Error::Contract(format!("λ = {lambda} exceeds the slice cutoff {}", slice.cutoff)));
    }
    let g = gamma.value();
    Ok(slice
        .eigenvalues
        .iter()
        .filter(|&&e| e < lambda)
        .map(|&e| if g == 0.0 { 1.0 } else { (lambda - e).powf(g) })
        .sum())
}

/// `Σ_{j ≤ N} λ_j`.
pub fn eigen_sum(slice: &SpectrumSlice, n: usize) -> Result<f64> {
    require_complete(slice)?;
    if n == 0 || n > slice.eigenvalues.len() {
        return Err(Error::Contract(format!("N = {n} outside 1..={}", slice.eigenvalues.len())));
    }
    Ok(slice.eigenvalues[..n].iter().sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{assemble, rasterize_domain, BoundaryCondition, GridDomain, Shape};
    use std::f64::consts::PI;

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
    fn toy_riesz_and_sums() {
        let s = slice_of(&[1.0, 3.0], 10.0);
        assert_eq!(riesz_mean(&s, 2.0, MomentOrder::new(1.0).unwrap()).unwrap(), 1.0);
        assert_eq!(riesz_mean(&s, 4.0, MomentOrder::new(0.0).unwrap()).unwrap(), 2.0);
        assert_eq!(riesz_mean(&s, 3.0, MomentOrder::new(0.0).unwrap()).unwrap(), 1.0);
        assert_eq!(eigen_sum(&s, 2).unwrap(), 4.0);
        assert!(matches!(eigen_sum(&s, 3), Err(Error::Contract(_))));
        assert!(matches!(riesz_mean(&s, 11.0, MomentOrder::new(0.0).unwrap()), Err(Error::Contract(_))));
        let mut bad = s.clone();
        bad.complete = false;
        assert!(matches!(riesz_mean(&bad, 2.0, MomentOrder::new(1.0).unwrap()), Err(Error::Contract(_))));
    }

    #[test]
    fn inertia_matches_dense_on_small_square() {
        let d = GridDomain::square(1.0, 0.125).unwrap();
        let op = assemble(&d, 0.0, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(op.dim(), 49);
        let dense = dense_spectrum(&op);
        for lambda in [25.0, 50.0, 100.0, 300.0, 1000.0] {
            let c = count_below(&op, lambda).unwrap();
            assert_eq!(c.count, dense.partition_point(|&e| e < lambda));
            assert_eq!(c.count, count_below_dense(&op, lambda).unwrap().count);
            assert!(c.pivot_margin >= pivot_tolerance(0.125));
        }
        assert_eq!(count_below(&op, 25.0).unwrap().count, 1);
    }

    #[test]
    fn lowest_discrete_dirichlet_eigenvalue() {
        let h = 0.125;
        let op = assemble(&GridDomain::square(1.0, h).unwrap(), 0.0, BoundaryCondition::Dirichlet).unwrap();
        let s = eigs_below(&op, 30.0).unwrap();
        let expected = 8.0 / (h * h) * (PI * h / 2.0).sin().powi(2);
        assert!(s.complete);
        assert_eq!(s.eigenvalues.len(), 1);
        assert!((s.eigenvalues[0] - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn count_at_eigenvalue_is_shifted() {
        let h = 0.125;
        let op = assemble(&GridDomain::square(1.0, h).unwrap(), 0.0, BoundaryCondition::Dirichlet).unwrap();
        let lambda1 = dense_spectrum(&op)[0];
        let c = count_below(&op, lambda1).unwrap();
        assert!(c.lambda >= lambda1);
        assert!(c.lambda - lambda1 <= 10.0 * 10.0 * pivot_tolerance(h));
        assert!(c.count <= 1);
    }

    #[test]
    fn iterative_matches_dense() {
        let shapes = [Shape::Square { side: 2.0 }, Shape::Disk { radius: 1.2 }, Shape::l_shape(1.0)];
        let opts = SolverOptions {
            dense_threshold: 0,
            slice_size: 12,
            ..SolverOptions::default()
        };
        for shape in &shapes {
            let d = rasterize_domain(shape, 0.125).unwrap();
            for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
                let op = assemble(&d, 3.0, bc).unwrap();
                let dense = dense_spectrum(&op);
                let cutoff = 0.5 * (dense[29] + dense[30]);
                let s = eigs_below_with(&op, cutoff, &opts).unwrap();
                assert!(s.complete, "{shape:?} {bc}");
                assert_eq!(s.eigenvalues.len(), 30);
                for (a, b) in s.eigenvalues.iter().zip(&dense) {
                    assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn empty_slice_below_spectrum() {
        let op = assemble(&GridDomain::square(1.0, 0.125).unwrap(), 1.0, BoundaryCondition::Dirichlet).unwrap();
        let s = eigs_below(&op, 1.0).unwrap();
        assert!(s.complete && s.eigenvalues.is_empty());
        assert!(matches!(count_below(&op, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn slice_export_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spectrum.csv");
        slice_of(&[1.0, 3.0], 4.0).write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("index,eigenvalue,residual\n0,1,0\n"));
        let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("spectrum.csv.json")).unwrap()).unwrap();
        assert_eq!(side["count"], 2);
        assert_eq!(side["complete"], true);
    }
}
