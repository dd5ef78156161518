//! Rasterized planar domains and Peierls-phase discretizations of `(D − BA)²`
//! in the symmetric gauge `A(x) = ½(−x₂, x₁)`.
//!
//! Site placement per boundary condition:
//!
//! * Dirichlet: grid vertices whose four adjacent cells are all interior.
//!   Exterior vertices are eliminated, so the square of side `L = n·h`
//!   carries `(n−1)²` unknowns and the classical five-point scheme.
//! * Neumann: centers of interior cells with the graph-Laplacian stencil
//!   (diagonal = number of interior neighbours / h²).
//! * Magnetic-periodic: the `n × n` vertices `−L/2 + i·h`, `i < n`, of a
//!   centered square; wrap-around hoppings carry the magnetic-translation
//!   phases.
//!
//! The hopping from site `p` to its neighbour `q` is `−h⁻² e^{iθ}` with
//! `θ = −B ∫_p^q A·dl`. `A` is linear, so the midpoint rule is exact:
//! `θ = B·y·h/2` for a step `+h` in x and `θ = −B·x·h/2` for a step `+h` in y.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbol::FieldStrength;

/// Shape description accepted by [`rasterize_domain`].
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// `(−L/2, L/2)²`.
    Square { side: f64 },
    /// Disk of the given radius centered at the origin.
    Disk { radius: f64 },
    /// Simple polygon, vertices in order.
    Polygon(Vec<(f64, f64)>),
    /// Mask file (see [`GridDomain::read_mask`]).
    MaskFile(PathBuf),
}

impl Shape {
    /// The L-shaped domain `(−s, s)² \ [0, s)²` of area `3s²`.
    pub fn l_shape(s: f64) -> Shape {
        Shape::Polygon(vec![(-s, -s), (s, -s), (s, 0.0), (0.0, 0.0), (0.0, s), (-s, s)])
    }
}

/// Cell mask on a uniform grid. Cell `(i, j)` covers
/// `[x0 + i·h, x0 + (i+1)·h] × [y0 + j·h, y0 + (j+1)·h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    origin: (f64, f64),
    h: f64,
    nx: usize,
    ny: usize,
    mask: Vec<bool>,
    area: f64,
}

impl GridDomain {
    /// `mask` is row-major with `mask[j * nx + i]` for cell `(i, j)`.
    pub fn new(origin: (f64, f64), h: f64, nx: usize, ny: usize, mask: Vec<bool>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("grid spacing must be > 0, got {h}")));
        }
        if mask.len() != nx * ny {
            return Err(Error::Data(format!("mask has {} cells, expected {nx}x{ny}", mask.len())));
        }
        let count = mask.iter().filter(|&&c| c).count();
        if count == 0 {
            return Err(Error::DegenerateDomain("mask has no interior cell".into()));
        }
        Ok(GridDomain {
            origin,
            h,
            nx,
            ny,
            mask,
            area: h * h * count as f64,
        })
    }

    /// Rasterized `(−L/2, L/2)²`.
    pub fn square(side: f64, h: f64) -> Result<Self> {
        rasterize_domain(&Shape::Square { side }, h)
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// `h²` times the number of interior cells.
    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Whether cell `(i, j)` is interior; out-of-range cells are exterior.
    pub fn is_interior(&self, i: isize, j: isize) -> bool {
        i >= 0 && j >= 0 && (i as usize) < self.nx && (j as usize) < self.ny && self.mask[j as usize * self.nx + i as usize]
    }

    pub fn interior_cells(&self) -> usize {
        self.mask.iter().filter(|&&c| c).count()
    }

    /// Side length when the domain is a fully interior, origin-centered square grid.
    pub fn centered_square_side(&self) -> Option<f64> {
        let side = self.nx as f64 * self.h;
        let centered = (self.origin.0 + side / 2.0).abs() <= 1e-9 * side && (self.origin.1 + side / 2.0).abs() <= 1e-9 * side;
        (self.nx == self.ny && centered && self.mask.iter().all(|&c| c)).then_some(side)
    }

    /// Parses the ASCII mask format: a header line `nx ny h x0 y0`, then `ny`
    /// lines of `nx` characters (`#` interior, `.` exterior), the first line
    /// being the top row.
    pub fn read_mask(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_mask(&text)
    }

    pub fn parse_mask(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Data("mask file is empty".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Data(format!("mask header needs `nx ny h x0 y0`, got `{header}`")));
        }
        let bad = |what: &str| Error::Data(format!("cannot parse {what} in mask header `{header}`"));
        let nx: usize = fields[0].parse().map_err(|_| bad("nx"))?;
        let ny: usize = fields[1].parse().map_err(|_| bad("ny"))?;
        let h: f64 = fields[2].parse().map_err(|_| bad("h"))?;
        let x0: f64 = fields[3].parse().map_err(|_| bad("x0"))?;
        let y0: f64 = fields[4].parse().map_err(|_| bad("y0"))?;
        let rows: Vec<&str> = lines.collect();
        if rows.len() != ny {
            return Err(Error::Data(format!("mask has {} rows, header says {ny}", rows.len())));
        }
        let mut mask = vec![false; nx * ny];
        for (r, row) in rows.iter().enumerate() {
            let row = row.trim_end();
            if row.chars().count() != nx {
                return Err(Error::Data(format!("mask row {r} has {} cells, expected {nx}", row.chars().count())));
            }
            let j = ny - 1 - r;
            for (i, c) in row.chars().enumerate() {
                mask[j * nx + i] = match c {
                    '#' => true,
                    '.' => false,
                    other => return Err(Error::Data(format!("unexpected mask character `{other}`"))),
                };
            }
        }
        GridDomain::new((x0, y0), h, nx, ny, mask)
    }

    pub fn to_mask_string(&self) -> String {
        let mut out = format!("{} {} {} {} {}\n", self.nx, self.ny, self.h, self.origin.0, self.origin.1);
        for j in (0..self.ny).rev() {
            for i in 0..self.nx {
                out.push(if self.mask[j * self.nx + i] { '#' } else { '.' });
            }
            out.push('\n');
        }
        out
    }
}

fn point_in_polygon(x: f64, y: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn rasterize_with(origin: (f64, f64), h: f64, nx: usize, ny: usize, inside: impl Fn(f64, f64) -> bool) -> Result<GridDomain> {
    let mut mask = vec![false; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let x = origin.0 + (i as f64 + 0.5) * h;
            let y = origin.1 + (j as f64 + 0.5) * h;
            mask[j * nx + i] = inside(x, y);
        }
    }
    GridDomain::new(origin, h, nx, ny, mask)
}

/// Rasterizes a shape: cell `(i, j)` is interior iff its center lies in the
/// open shape.
pub fn rasterize_domain(shape: &Shape, h: f64) -> Result<GridDomain> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("grid spacing must be > 0, got {h}")));
    }
    match shape {
        Shape::Square { side } => {
            if !(*side > 0.0) {
                return Err(Error::DegenerateDomain(format!("square side {side}")));
            }
            let n = (side / h).round() as usize;
            let half = 0.5 * side;
            let o = -0.5 * n as f64 * h;
            rasterize_with((o, o), h, n, n, |x, y| x.abs() < half && y.abs() < half)
        }
        Shape::Disk { radius } => {
            if !(*radius > 0.0) {
                return Err(Error::DegenerateDomain(format!("disk radius {radius}")));
            }
            let n = (2.0 * radius / h).ceil() as usize;
            let o = -0.5 * n as f64 * h;
            let r2 = radius * radius;
            rasterize_with((o, o), h, n, n, |x, y| x * x + y * y < r2)
        }
        Shape::Polygon(vertices) => {
            if vertices.len() < 3 {
                return Err(Error::DegenerateDomain("polygon needs at least 3 vertices".into()));
            }
            let (mut xmin, mut ymin) = (f64::INFINITY, f64::INFINITY);
            let (mut xmax, mut ymax) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for &(x, y) in vertices {
                xmin = xmin.min(x);
                ymin = ymin.min(y);
                xmax = xmax.max(x);
                ymax = ymax.max(y);
            }
            let nx = ((xmax - xmin) / h - 1e-9).ceil().max(1.0) as usize;
            let ny = ((ymax - ymin) / h - 1e-9).ceil().max(1.0) as usize;
            rasterize_with((xmin, ymin), h, nx, ny, |x, y| point_in_polygon(x, y, vertices))
        }
        Shape::MaskFile(path) => GridDomain::read_mask(path),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryCondition {
    Dirichlet,
    Neumann,
    MagneticPeriodic,
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundaryCondition::Dirichlet => "dirichlet",
            BoundaryCondition::Neumann => "neumann",
            BoundaryCondition::MagneticPeriodic => "periodic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluxReport {
    /// `(2π)⁻¹ L² B`.
    pub continuum_flux: f64,
    pub admissible: bool,
    pub nearest_admissible_b: f64,
}

/// Checks the flux quantization `(2π)⁻¹ L² B ∈ ℕ` required for commuting
/// magnetic translations on the torus of side `L`.
pub fn flux_check(side: f64, b: FieldStrength, h: f64) -> Result<FluxReport> {
    if !(side > 0.0 && h > 0.0) {
        return Err(Error::Config(format!("need L, h > 0, got L={side}, h={h}")));
    }
    let cells = side / h;
    if (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
        return Err(Error::Config(format!("L/h = {cells} is not an integer")));
    }
    let flux = side * side * b.value() / (2.0 * PI);
    let nearest = flux.round().max(1.0);
    Ok(FluxReport {
        continuum_flux: flux,
        admissible: flux.round() >= 1.0 && (flux - flux.round()).abs() <= 1e-9,
        nearest_admissible_b: 2.0 * PI * nearest / (side * side),
    })
}

/// Sparse Hermitian discretization of `(D − BA)²` in compressed-row layout.
/// Both triangles are stored; `(q, p)` is the exact conjugate of `(p, q)`.
#[derive(Debug, Clone)]
pub struct MagneticOperator {
    b: f64,
    bc: BoundaryCondition,
    domain: GridDomain,
    sites: Vec<[f64; 2]>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl MagneticOperator {
    pub fn dim(&self) -> usize {
        self.sites.len()
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn h(&self) -> f64 {
        self.domain.h
    }

    /// Physical coordinates of each unknown.
    pub fn sites(&self) -> &[[f64; 2]] {
        &self.sites
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, p: usize) -> (&[usize], &[Complex64]) {
        let r = self.row_ptr[p]..self.row_ptr[p + 1];
        (&self.cols[r.clone()], &self.vals[r])
    }

    pub fn entry(&self, p: usize, q: usize) -> Option<Complex64> {
        let (cols, vals) = self.row(p);
        cols.binary_search(&q).ok().map(|k| vals[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|p| self.entry(p, p).map_or(0.0, |z| z.re)).collect()
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (p, yp) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(p);
            *yp = cols.iter().zip(vals).map(|(&q, v)| v * x[q]).sum();
        }
    }

    /// Maximum absolute row sum.
    pub fn norm1(&self) -> f64 {
        (0..self.dim())
            .map(|p| self.row(p).1.iter().map(|v| v.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Gershgorin lower bound on the spectrum.
    pub fn gershgorin_lower(&self) -> f64 {
        (0..self.dim())
            .map(|p| {
                let (cols, vals) = self.row(p);
                cols.iter()
                    .zip(vals)
                    .map(|(&q, v)| if q == p { v.re } else { -v.norm() })
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest `|p − q|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.dim())
            .flat_map(|p| self.row(p).0.iter().map(move |&q| p.abs_diff(q)))
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for p in 0..n {
            let (cols, vals) = self.row(p);
            for (&q, &v) in cols.iter().zip(vals) {
                m[(p, q)] = v;
            }
        }
        m
    }

    /// Coordinate triplets `row col re im`, 0-based, sorted row-major.
    pub fn to_triplets(&self) -> String {
        let mut out = String::with_capacity(self.nnz() * 48);
        for p in 0..self.dim() {
            let (cols, vals) = self.row(p);
            for (&q, v) in cols.iter().zip(vals) {
                let _ = writeln!(out, "{p} {q} {} {}", v.re, v.im);
            }
        }
        out
    }

    pub fn write_triplets(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_triplets().as_bytes())
    }

    /// Lattice-index pairs `(p, q)` of all stored off-diagonal hoppings with `p < q`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim()).flat_map(move |p| {
            let (cols, vals) = self.row(p);
            cols.iter().zip(vals).filter(move |(&q, _)| q > p).map(move |(&q, &v)| (p, q, v))
        })
    }
}

/// Undirected edge between two unknowns with the phase of the `p → q` hop.
struct Hop {
    p: usize,
    q: usize,
    theta: f64,
}

struct Layout {
    sites: Vec<[f64; 2]>,
    hops: Vec<Hop>,
    diag: Vec<f64>,
}

fn lattice_layout(
    ni: usize,
    nj: usize,
    present: impl Fn(usize, usize) -> bool,
) -> (Vec<(usize, usize)>, Vec<usize>) {
    // pick the traversal with the smaller bandwidth; vertical neighbours are
    // one traversal line apart
    let row_major: Vec<(usize, usize)> = (0..nj).flat_map(|j| (0..ni).map(move |i| (i, j))).filter(|&(i, j)| present(i, j)).collect();
    let col_major: Vec<(usize, usize)> = (0..ni).flat_map(|i| (0..nj).map(move |j| (i, j))).filter(|&(i, j)| present(i, j)).collect();
    let band = |order: &[(usize, usize)]| {
        let mut index = vec![usize::MAX; ni * nj];
        for (k, &(i, j)) in order.iter().enumerate() {
            index[j * ni + i] = k;
        }
        let mut bw = 0;
        for (k, &(i, j)) in order.iter().enumerate() {
            for (ii, jj) in [(i + 1, j), (i, j + 1)] {
                if ii < ni && jj < nj && index[jj * ni + ii] != usize::MAX {
                    bw = bw.max(index[jj * ni + ii].abs_diff(k));
                }
            }
        }
        (bw, index)
    };
    let (bw_r, idx_r) = band(&row_major);
    let (bw_c, idx_c) = band(&col_major);
    if bw_c < bw_r {
        (col_major, idx_c)
    } else {
        (row_major, idx_r)
    }
}

fn open_layout(domain: &GridDomain, b: f64, bc: BoundaryCondition) -> Result<Layout> {
    let (x0, y0) = domain.origin;
    let h = domain.h;
    // Dirichlet unknowns live on vertices (i, j), 1 ≤ i < nx, Neumann on cells
    let (ni, nj, offset) = match bc {
        BoundaryCondition::Dirichlet => (domain.nx + 1, domain.ny + 1, 0.0),
        _ => (domain.nx, domain.ny, 0.5),
    };
    let present = |i: usize, j: usize| match bc {
        BoundaryCondition::Dirichlet => {
            let (i, j) = (i as isize, j as isize);
            domain.is_interior(i - 1, j - 1) && domain.is_interior(i, j - 1) && domain.is_interior(i - 1, j) && domain.is_interior(i, j)
        }
        _ => domain.is_interior(i as isize, j as isize),
    };
    let coord = |i: usize, j: usize| [x0 + (i as f64 + offset) * h, y0 + (j as f64 + offset) * h];
    let (order, index) = lattice_layout(ni, nj, present);
    if order.is_empty() {
        return Err(Error::DegenerateDomain(format!("domain has no {bc} unknowns at h={h}")));
    }
    let sites: Vec<[f64; 2]> = order.iter().map(|&(i, j)| coord(i, j)).collect();
    let mut hops = Vec::with_capacity(2 * sites.len());
    let mut neighbours = vec![0usize; sites.len()];
    for (p, &(i, j)) in order.iter().enumerate() {
        let [x, y] = sites[p];
        if i + 1 < ni {
            let q = index[j * ni + i + 1];
            if q != usize::MAX {
                hops.push(Hop { p, q, theta: b * y * h / 2.0 });
                neighbours[p] += 1;
                neighbours[q] += 1;
            }
        }
        if j + 1 < nj {
            let q = index[(j + 1) * ni + i];
            if q != usize::MAX {
                hops.push(Hop { p, q, theta: -b * x * h / 2.0 });
                neighbours[p] += 1;
                neighbours[q] += 1;
            }
        }
    }
    let inv_h2 = 1.0 / (h * h);
    let diag = match bc {
        BoundaryCondition::Dirichlet => vec![4.0 * inv_h2; sites.len()],
        _ => neighbours.iter().map(|&c| c as f64 * inv_h2).collect(),
    };
    Ok(Layout { sites, hops, diag })
}

fn periodic_layout(domain: &GridDomain, b: f64) -> Result<Layout> {
    let side = domain
        .centered_square_side()
        .ok_or_else(|| Error::Config("magnetic-periodic conditions need a full, origin-centered square grid".into()))?;
    let h = domain.h;
    let n = domain.nx;
    if n < 3 {
        return Err(Error::Config(format!("periodic grid needs at least 3 vertices per side, got {n}")));
    }
    let report = flux_check(side, FieldStrength::new(b).map_err(|_| Error::Config("periodic conditions need B > 0".into()))?, h)?;
    if !report.admissible {
        return Err(Error::Config(format!(
            "flux L²B/2π = {} is not a positive integer; nearest admissible B = {}",
            report.continuum_flux, report.nearest_admissible_b
        )));
    }
    // fold the j order (0, n−1, 1, n−2, ...) so the y wrap stays inside the band
    let mut fold = Vec::with_capacity(n);
    let (mut lo, mut hi) = (0usize, n - 1);
    while lo <= hi {
        fold.push(lo);
        if lo != hi {
            fold.push(hi);
        }
        lo += 1;
        if hi == 0 {
            break;
        }
        hi -= 1;
    }
    let mut index = vec![0usize; n * n];
    let mut sites = Vec::with_capacity(n * n);
    let x0 = -0.5 * side;
    for &j in &fold {
        for i in 0..n {
            index[j * n + i] = sites.len();
            sites.push([x0 + i as f64 * h, x0 + j as f64 * h]);
        }
    }
    let mut hops = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let p = index[j * n + i];
            let [x, y] = sites[p];
            // step +h in x; the ghost past the seam is T₁-related to vertex 0
            let (qi, extra_x) = if i + 1 < n { (i + 1, 0.0) } else { (0, b * side * y / 2.0) };
            hops.push(Hop { p, q: index[j * n + qi], theta: b * y * h / 2.0 + extra_x });
            let (qj, extra_y) = if j + 1 < n { (j + 1, 0.0) } else { (0, -b * side * x / 2.0) };
            hops.push(Hop { p, q: index[qj * n + i], theta: -b * x * h / 2.0 + extra_y });
        }
    }
    let diag = vec![4.0 / (h * h); sites.len()];
    Ok(Layout { sites, hops, diag })
}

fn build(layout: Layout, domain: &GridDomain, b: f64, bc: BoundaryCondition) -> MagneticOperator {
    let n = layout.sites.len();
    let h = domain.h;
    let amp = -1.0 / (h * h);
    let mut rows: Vec<Vec<(usize, Complex64)>> = (0..n).map(|p| vec![(p, Complex64::new(layout.diag[p], 0.0))]).collect();
    for hop in &layout.hops {
        let z = Complex64::from_polar(amp, hop.theta);
        let z = if b == 0.0 { Complex64::new(amp, 0.0) } else { z };
        rows[hop.p].push((hop.q, z));
        rows[hop.q].push((hop.p, z.conj()));
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for mut row in rows {
        row.sort_by_key(|e| e.0);
        for (q, v) in row {
            cols.push(q);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    MagneticOperator {
        b,
        bc,
        domain: domain.clone(),
        sites: layout.sites,
        row_ptr,
        cols,
        vals,
    }
}

/// Assembles the five-point Peierls discretization of `(D − BA)²`.
///
/// `b` may be zero (the real five-point Laplacian) except for
/// magnetic-periodic conditions, which need an admissible positive flux.
pub fn assemble(domain: &GridDomain, b: f64, bc: BoundaryCondition) -> Result<MagneticOperator> {
    if !(b >= 0.0 && b.is_finite()) {
        return Err(Error::Domain(format!("field strength must be >= 0, got {b}")));
    }
    let layout = match bc {
        BoundaryCondition::MagneticPeriodic => periodic_layout(domain, b)?,
        _ => open_layout(domain, b, bc)?,
    };
    Ok(build(layout, domain, b, bc))
}

/// Conjugates the operator by the diagonal unitary `e^{iχ}`:
/// `H'_{pq} = e^{iχ_p} H_{pq} e^{−iχ_q}`.
pub fn gauge_shift(op: &MagneticOperator, chi: &[f64]) -> Result<MagneticOperator> {
    if op.bc == BoundaryCondition::MagneticPeriodic {
        return Err(Error::Config("gauge_shift is unsupported for magnetic-periodic operators".into()));
    }
    if chi.len() != op.dim() {
        return Err(Error::Contract(format!("gauge function has {} values for {} sites", chi.len(), op.dim())));
    }
    let mut out = op.clone();
    for p in 0..op.dim() {
        for k in op.row_ptr[p]..op.row_ptr[p + 1] {
            let q = op.cols[k];
            if q > p {
                let z = op.vals[k] * Complex64::from_polar(1.0, chi[p] - chi[q]);
                out.vals[k] = z;
                let (qcols, _) = op.row(q);
                let back = op.row_ptr[q] + qcols.binary_search(&p).expect("stored in conjugate pairs");
                out.vals[back] = z.conj();
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phase_of(op: &MagneticOperator, p: usize, q: usize) -> Complex64 {
        let z = op.entry(p, q).expect("neighbouring sites");
        z / z.norm()
    }

    fn site_index(op: &MagneticOperator) -> std::collections::HashMap<(i64, i64), usize> {
        let h = op.h();
        op.sites()
            .iter()
            .enumerate()
            .map(|(k, s)| (((s[0] / h).round() as i64, (s[1] / h).round() as i64), k))
            .collect()
    }

    #[test]
    fn square_rasterization_is_exact() {
        let d = GridDomain::square(1.0, 0.25).unwrap();
        assert_eq!((d.nx(), d.ny()), (4, 4));
        assert!(d.mask().iter().all(|&c| c));
        assert_eq!(d.area(), 1.0);
    }

    #[test]
    fn square_area_within_rounding_bound() {
        for &(side, h) in &[(1.0, 0.3), (2.3, 0.17), (7.09, 0.139), (5.0, 0.45)] {
            let d = GridDomain::square(side, h).unwrap();
            assert_eq!(d.nx(), (side / h).round() as usize);
            assert!((d.area() - side * side).abs() <= 2.0 * side * h + h * h);
        }
    }

    #[test]
    fn disk_area_close_to_pi() {
        let d = rasterize_domain(&Shape::Disk { radius: 1.0 }, 0.05).unwrap();
        assert!((d.area() - PI).abs() / PI < 0.02);
    }

    #[test]
    fn polygon_square_matches_square() {
        let poly = Shape::Polygon(vec![(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]);
        let a = rasterize_domain(&poly, 0.125).unwrap();
        let b = GridDomain::square(1.0, 0.125).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn l_shape_area() {
        let d = rasterize_domain(&Shape::l_shape(1.0), 0.1).unwrap();
        assert!((d.area() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn empty_mask_is_degenerate() {
        let r = rasterize_domain(&Shape::Polygon(vec![(0.01, 0.01), (0.02, 0.01), (0.01, 0.02)]), 0.5);
        assert!(matches!(r, Err(Error::DegenerateDomain(_))));
    }

    #[test]
    fn mask_text_round_trip_and_orientation() {
        let text = "3 2 0.5 0 0\n#..\n###\n";
        let d = GridDomain::parse_mask(text).unwrap();
        // first line is the top row
        assert!(d.is_interior(0, 1) && !d.is_interior(1, 1));
        assert!(d.is_interior(2, 0));
        assert_eq!(d.area(), 4.0 * 0.25);
        assert_eq!(GridDomain::parse_mask(&d.to_mask_string()).unwrap(), d);
        assert!(matches!(GridDomain::parse_mask("3 2 0.5 0 0\n#..\n"), Err(Error::Data(_))));
        assert!(matches!(
            GridDomain::read_mask(Path::new("/nonexistent/mask.txt")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn zero_field_is_five_point_laplacian() {
        let d = GridDomain::square(1.0, 0.25).unwrap();
        let op = assemble(&d, 0.0, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(op.dim(), 9);
        let m = op.to_dense();
        for p in 0..9 {
            for q in 0..9 {
                let z = m[(p, q)];
                assert_eq!(z.im, 0.0);
                let [xp, yp] = op.sites()[p];
                let [xq, yq] = op.sites()[q];
                let dist = ((xp - xq).abs() + (yp - yq).abs()) / 0.25;
                let expected = if p == q {
                    64.0
                } else if (dist - 1.0).abs() < 1e-12 {
                    -16.0
                } else {
                    0.0
                };
                assert_eq!(z.re, expected, "entry ({p},{q})");
            }
        }
        let single = assemble(&GridDomain::square(1.0, 0.5).unwrap(), 0.0, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(single.dim(), 1);
        assert_eq!(single.entry(0, 0).unwrap(), Complex64::new(16.0, 0.0));
    }

    #[test]
    fn hermitian_bitwise_and_diagonals() {
        let d = rasterize_domain(&Shape::l_shape(1.0), 0.2).unwrap();
        for bc in [BoundaryCondition::Dirichlet, BoundaryCondition::Neumann] {
            let op = assemble(&d, 1.3, bc).unwrap();
            for p in 0..op.dim() {
                let (cols, vals) = op.row(p);
                for (&q, &v) in cols.iter().zip(vals) {
                    assert_eq!(op.entry(q, p).unwrap(), v.conj());
                    if q != p {
                        assert!((v.norm() - 25.0).abs() < 1e-12);
                    }
                }
                let off: f64 = cols.iter().zip(vals).filter(|(&q, _)| q != p).map(|(_, v)| v.norm()).sum();
                assert!(off <= 4.0 / 0.04 + 1e-9);
                if bc == BoundaryCondition::Dirichlet {
                    assert!((op.entry(p, p).unwrap() - Complex64::new(100.0, 0.0)).norm() < 1e-9);
                } else {
                    assert!((op.entry(p, p).unwrap().re - off).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn plaquette_flux_is_uniform() {
        // 4×4 cells give a 3×3 interior vertex grid
        let b = 1.0;
        let d = GridDomain::square(1.0, 0.25).unwrap();
        let op = assemble(&d, b, BoundaryCondition::Dirichlet).unwrap();
        assert_eq!(op.dim(), 9);
        let idx = site_index(&op);
        let expected = Complex64::from_polar(1.0, -b * 0.0625);
        let mut seen = 0;
        for (&(i, j), &a) in &idx {
            let (Some(&bb), Some(&c), Some(&dd)) = (idx.get(&(i + 1, j)), idx.get(&(i + 1, j + 1)), idx.get(&(i, j + 1))) else {
                continue;
            };
            let loop_phase = phase_of(&op, a, bb) * phase_of(&op, bb, c) * phase_of(&op, c, dd) * phase_of(&op, dd, a);
            assert!((loop_phase - expected).norm() < 1e-14);
            seen += 1;
        }
        assert_eq!(seen, 4);
    }

    #[test]
    fn periodic_plaquettes_including_seams() {
        let flux = 3.0;
        let side = 3.0;
        let b = 2.0 * PI * flux / (side * side);
        let n = 12;
        let h = side / n as f64;
        let d = GridDomain::square(side, h).unwrap();
        let op = assemble(&d, b, BoundaryCondition::MagneticPeriodic).unwrap();
        assert_eq!(op.dim(), n * n);
        let idx = site_index(&op);
        let wrap = |v: i64| -> i64 {
            let lo = -(n as i64) / 2;
            lo + (v - lo).rem_euclid(n as i64)
        };
        let expected = Complex64::from_polar(1.0, -b * h * h);
        let mut total = Complex64::new(1.0, 0.0);
        for (&(i, j), &a) in &idx {
            let bb = idx[&(wrap(i + 1), j)];
            let c = idx[&(wrap(i + 1), wrap(j + 1))];
            let dd = idx[&(i, wrap(j + 1))];
            let loop_phase = phase_of(&op, a, bb) * phase_of(&op, bb, c) * phase_of(&op, c, dd) * phase_of(&op, dd, a);
            assert!((loop_phase - expected).norm() < 1e-12, "plaquette at ({i},{j})");
            total *= loop_phase;
        }
        assert!((total - Complex64::new(1.0, 0.0)).norm() < 1e-9);
        assert!(op.bandwidth() <= 3 * n);
    }

    #[test]
    fn periodic_rejects_bad_flux() {
        let d = GridDomain::square(1.0, 0.1).unwrap();
        assert!(matches!(assemble(&d, 6.0, BoundaryCondition::MagneticPeriodic), Err(Error::Config(_))));
        let disk = rasterize_domain(&Shape::Disk { radius: 1.0 }, 0.1).unwrap();
        assert!(matches!(assemble(&disk, 2.0 * PI, BoundaryCondition::MagneticPeriodic), Err(Error::Config(_))));
    }

    #[test]
    fn flux_check_examples() {
        let r = flux_check(1.0, FieldStrength::new(2.0 * PI).unwrap(), 0.1).unwrap();
        assert!(r.admissible);
        assert!((r.continuum_flux - 1.0).abs() < 1e-12);
        let r = flux_check(1.0, FieldStrength::new(6.0).unwrap(), 0.1).unwrap();
        assert!(!r.admissible);
        assert!((r.nearest_admissible_b - 2.0 * PI).abs() < 1e-12);
        let side = (2.0 * PI).sqrt();
        let r = flux_check(side, FieldStrength::new(1.0).unwrap(), side / 10.0).unwrap();
        assert!(r.admissible);
        assert!(matches!(flux_check(1.0, FieldStrength::new(1.0).unwrap(), 0.3), Err(Error::Config(_))));
    }

    #[test]
    fn gauge_shift_identity_and_periodic_refusal() {
        let d = GridDomain::square(1.0, 0.125).unwrap();
        let op = assemble(&d, 2.0, BoundaryCondition::Dirichlet).unwrap();
        let same = gauge_shift(&op, &vec![0.0; op.dim()]).unwrap();
        assert_eq!(same.vals, op.vals);
        let shifted = gauge_shift(&op, &op.sites().iter().map(|s| s[0] * s[1]).collect::<Vec<_>>()).unwrap();
        for (p, q, v) in shifted.edges() {
            assert_eq!(shifted.entry(q, p).unwrap(), v.conj());
        }
        let flux_side = (2.0 * PI).sqrt();
        let t = GridDomain::square(flux_side, flux_side / 8.0).unwrap();
        let top = assemble(&t, 1.0, BoundaryCondition::MagneticPeriodic).unwrap();
        assert!(gauge_shift(&top, &vec![0.0; top.dim()]).is_err());
    }

    #[test]
    fn triplets_sorted_row_major() {
        let d = GridDomain::square(1.0, 0.25).unwrap();
        let op = assemble(&d, 1.0, BoundaryCondition::Dirichlet).unwrap();
        let text = op.to_triplets();
        let keys: Vec<(usize, usize)> = text
            .lines()
            .map(|l| {
                let f: Vec<&str> = l.split(' ').collect();
                (f[0].parse().unwrap(), f[1].parse().unwrap())
            })
            .collect();
        assert_eq!(keys.len(), op.nnz());
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }
}
