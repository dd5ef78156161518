//! End-to-end experiments: configuration, execution, artifact files and
//! manifests. The `landau` binary is a thin wrapper around [`run`].
//!
//! Configurations are flat `key = value` files (`#` starts a comment). List
//! values are comma separated. Every λ is given in units of B.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::bounds::{self, Allowance, BoundFamily, BoundReport, Budget, Flag, ReportSetup};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::lattice::{assemble, flux_check, rasterize_domain, BoundaryCondition, GridDomain, Shape};
use crate::spectra::{count_below, eigs_below_with, SolverOptions, SpectrumSlice};
use crate::symbol::{
    excess_factor, lift_moment, magnetic_symbol_2d, magnetic_symbol_3d, rho_constant, sup_ratio, sup_ratio_closed_form, FieldStrength,
    Maximizer, MomentOrder,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SymbolTable,
    TorusVerify,
    DosScan,
    BcBracket,
    BoundsMatrix,
    Counterexample,
    Product3d,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::SymbolTable,
        Experiment::TorusVerify,
        Experiment::DosScan,
        Experiment::BcBracket,
        Experiment::BoundsMatrix,
        Experiment::Counterexample,
        Experiment::Product3d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SymbolTable => "symbol-table",
            Experiment::TorusVerify => "torus-verify",
            Experiment::DosScan => "dos-scan",
            Experiment::BcBracket => "bc-bracket",
            Experiment::BoundsMatrix => "bounds-matrix",
            Experiment::Counterexample => "counterexample",
            Experiment::Product3d => "product-3d",
        }
    }

    /// Accepted keys with their defaults.
    pub fn keys(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Experiment::SymbolTable => &[
                ("B", "1"),
                ("gammas", "0,0.25,0.5,0.75,1,1.5,2"),
                ("lambdas", "0.5,1,1.5,2,2.5,3,3.5,4,5,6,7,8"),
            ],
            Experiment::TorusVerify => &[
                ("B", "1"),
                ("flux", "8"),
                ("h_policy", "0.02"),
                ("cells", "0"),
                ("cutoff", "6"),
                ("levels", "3"),
                ("g_cluster", "0.2"),
                ("tol_center", "0.05"),
            ],
            Experiment::DosScan => &[
                ("B", "1"),
                ("lambda", "3.5"),
                ("fluxes", "16,32,64"),
                ("h_policy", "0.02"),
                ("dos_tol", "0.85"),
                ("periodic", "true"),
            ],
            Experiment::BcBracket => &[
                ("B", "1"),
                ("fluxes", "16,64"),
                ("lambdas", "0.5,1.5,3.5,5.5"),
                ("h_policy", "0.02"),
                ("exponent_min", "0.25"),
                ("exponent_max", "0.75"),
            ],
            Experiment::BoundsMatrix => &[
                ("Bs", "0,0.5,1,2"),
                ("fluxes", "4,16,64"),
                ("shapes", "square,disk,lshape"),
                ("gammas", "0,0.25,0.5,0.75,1,1.5,2"),
                ("lambdas", "1.05,1.5,2,2.5,3.05,3.5,4,4.5,5.05,5.5,6,6.5,7.05,7.5,8"),
                ("small_lambdas", "10,20,30,40"),
                ("h_policy", "0.02"),
                ("disk_radius", "1"),
                ("lshape_size", "1"),
                ("calibration_cells", "32"),
                ("calibration_lambda_max", "60"),
            ],
            Experiment::Counterexample => &[
                ("gamma", "0"),
                ("B", "1"),
                ("epsilon", "0.4"),
                ("max_flux", "128"),
                ("max_unknowns", "100000"),
                ("max_wall", "900"),
                ("flux_res", "0.02"),
            ],
            Experiment::Product3d => &[
                ("B", "1"),
                ("flux", "16"),
                ("interval", "4"),
                ("gammas", "0,0.25,0.5,1,1.5"),
                ("lambdas", "2,3.05,4,5.05,6"),
                ("h_policy", "0.02"),
                ("calibration_cells", "32"),
                ("calibration_lambda_max", "60"),
            ],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// Validated experiment configuration with defaults filled in.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub params: BTreeMap<String, String>,
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
        }
    }
    Ok(out)
}

impl ExperimentConfig {
    /// Builds a configuration from file contents and overrides; overrides win.
    /// The optional `experiment` key must agree with `experiment`.
    pub fn new(experiment: Experiment, file: Option<&str>, overrides: &[(String, String)], seed: Option<u64>) -> Result<Self> {
        let mut given = match file {
            Some(text) => parse_key_values(text)?,
            None => BTreeMap::new(),
        };
        for (k, v) in overrides {
            given.insert(k.clone(), v.clone());
        }
        if let Some(name) = given.remove("experiment") {
            if name != experiment.name() {
                return Err(Error::Config(format!("config is for `{name}` but `{experiment}` was requested")));
            }
        }
        let file_seed = given.remove("seed").map(|s| s.parse::<u64>().map_err(|_| Error::Config(format!("seed: `{s}` is not an unsigned integer")))).transpose()?;
        let keys = experiment.keys();
        let mut params: BTreeMap<String, String> = keys.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        for (k, v) in given {
            if !params.contains_key(&k) {
                let known: Vec<&str> = keys.iter().map(|(k, _)| *k).collect();
                return Err(Error::Config(format!("unknown key `{k}` for {experiment} (known: {})", known.join(", "))));
            }
            params.insert(k, v);
        }
        let cfg = ExperimentConfig {
            experiment,
            seed: seed.or(file_seed).unwrap_or(1),
            params,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(experiment: Experiment, path: Option<&Path>, overrides: &[(String, String)], seed: Option<u64>) -> Result<Self> {
        let text = path.map(|p| std::fs::read_to_string(p).map_err(|e| Error::io(p, e))).transpose()?;
        Self::new(experiment, text.as_deref(), overrides, seed)
    }

    fn raw(&self, key: &str) -> &str {
        self.params.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v = self.raw(key);
        v.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::Config(format!("{key}: `{v}` is not a finite number")))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v = self.raw(key);
        v.parse::<usize>().map_err(|_| Error::Config(format!("{key}: `{v}` is not an unsigned integer")))
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        let v = self.raw(key);
        v.parse::<bool>().map_err(|_| Error::Config(format!("{key}: `{v}` is not true/false")))
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::Config(format!("{key}: `{s}` is not a finite number"))))
            .collect()
    }

    pub fn u32_list(&self, key: &str) -> Result<Vec<u32>> {
        self.raw(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<u32>().map_err(|_| Error::Config(format!("{key}: `{s}` is not an unsigned integer"))))
            .collect()
    }

    pub fn str_list(&self, key: &str) -> Vec<String> {
        self.raw(key).split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
    }

    fn field(&self, key: &str) -> Result<FieldStrength> {
        FieldStrength::new(self.f64(key)?).map_err(|e| Error::Config(format!("{key}: {e}")))
    }

    /// Type-checks every parameter the experiment reads.
    pub fn validate(&self) -> Result<()> {
        for (key, _) in self.experiment.keys() {
            match *key {
                "shapes" => {
                    for s in self.str_list(key) {
                        if !matches!(s.as_str(), "square" | "disk" | "lshape") {
                            return Err(Error::Config(format!("shapes: unknown shape `{s}`")));
                        }
                    }
                }
                "periodic" => {
                    self.bool(key)?;
                }
                "fluxes" => {
                    if self.u32_list(key)?.is_empty() {
                        return Err(Error::Config("fluxes: empty list".into()));
                    }
                }
                "gammas" | "lambdas" | "small_lambdas" | "Bs" => {
                    self.f64_list(key)?;
                }
                "flux" | "cells" | "levels" | "max_flux" | "max_unknowns" | "calibration_cells" => {
                    self.usize(key)?;
                }
                _ => {
                    self.f64(key)?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Assertion {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: Experiment,
    pub version: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub started_unix: u64,
    pub wall_time_s: f64,
    pub assertions: Vec<Assertion>,
    pub artifacts: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.manifest.passed
    }
}

/// Collects artifact paths and assertions while an experiment runs.
struct Recorder {
    out: PathBuf,
    artifacts: Vec<String>,
    assertions: Vec<Assertion>,
}

impl Recorder {
    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.out.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        write_atomic(&p, bytes)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.write(name, text.as_bytes())
    }

    fn write_slice(&mut self, name: &str, slice: &SpectrumSlice) -> Result<()> {
        let p = self.path(name);
        self.artifacts.push(format!("{name}.json"));
        slice.write(&p)
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion::new(name, passed, detail));
    }
}

fn csv_bytes<R: AsRef<[String]>>(header: &[&str], rows: &[R]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.as_ref())?;
    }
    w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))
}

fn solver(cfg: &ExperimentConfig) -> SolverOptions {
    SolverOptions {
        seed: cfg.seed,
        ..SolverOptions::default()
    }
}

/// Runs an experiment, writing artifacts and `manifest.json` into `out`.
/// Assertion failures are reported in the outcome, not as errors.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome> {
    let started = Instant::now();
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut rec = Recorder {
        out: out.to_path_buf(),
        artifacts: Vec::new(),
        assertions: Vec::new(),
    };
    match cfg.experiment {
        Experiment::SymbolTable => run_symbol_table(cfg, &mut rec)?,
        Experiment::TorusVerify => run_torus_verify(cfg, &mut rec)?,
        Experiment::DosScan => run_dos_scan(cfg, &mut rec)?,
        Experiment::BcBracket => run_bc_bracket(cfg, &mut rec)?,
        Experiment::BoundsMatrix => run_bounds_matrix(cfg, &mut rec)?,
        Experiment::Counterexample => run_counterexample(cfg, &mut rec)?,
        Experiment::Product3d => run_product_3d(cfg, &mut rec)?,
    }
    let manifest = Manifest {
        experiment: cfg.experiment,
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        inputs: cfg.params.clone(),
        started_unix,
        wall_time_s: started.elapsed().as_secs_f64(),
        passed: rec.assertions.iter().all(|a| a.passed),
        assertions: rec.assertions,
        artifacts: rec.artifacts,
    };
    let manifest_path = out.join("manifest.json");
    write_atomic(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(RunOutcome { manifest, manifest_path })
}

fn run_symbol_table(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let b = cfg.field("B")?;
    let gammas = cfg.f64_list("gammas")?;
    let lambdas = cfg.f64_list("lambdas")?;
    let mut rows = Vec::new();
    let mut worst_lift: f64 = 0.0;
    for &g in &gammas {
        let gamma = MomentOrder::new(g).map_err(|e| Error::Config(format!("gammas: {e}")))?;
        for &x in &lambdas {
            let lambda = x * b.value();
            let s2 = magnetic_symbol_2d(b, lambda, gamma).value;
            let s3 = magnetic_symbol_3d(b, lambda, gamma).value;
            let lift = if g > 0.0 { Some(lift_moment(b, lambda, gamma)?) } else { None };
            if let Some(l) = lift {
                worst_lift = worst_lift.max((l - s2).abs() / s2.abs().max(1e-300));
            }
            rows.push(vec![
                g.to_string(),
                x.to_string(),
                b.value().to_string(),
                s2.to_string(),
                s3.to_string(),
                lift.map_or(String::new(), |l| l.to_string()),
            ]);
        }
    }
    rec.write("symbols.csv", &csv_bytes(&["gamma", "lambda_over_B", "B", "symbol_2d", "symbol_3d", "lift_moment"], &rows)?)?;
    rec.check("lift_moment matches the Landau sum", worst_lift <= 1e-10, format!("max relative deviation {worst_lift:e}"));

    let mut rows = Vec::new();
    let mut worst_sup: f64 = 0.0;
    for &g in &gammas {
        let gamma = MomentOrder::new(g)?;
        let r = if g < 1.0 { excess_factor(gamma)?.to_string() } else { "1".into() };
        let rho = if g < 1.5 { rho_constant(gamma, 2)?.to_string() } else { String::new() };
        let numeric = sup_ratio(gamma, b);
        let closed = sup_ratio_closed_form(gamma);
        worst_sup = worst_sup.max((numeric.sup - closed).abs());
        let arg = match numeric.argmax {
            Maximizer::At(x) => format!("at {}", x / b.value()),
            Maximizer::RightLimit(x) => format!("right limit at {}", x / b.value()),
            Maximizer::Infinity => "infinity".into(),
        };
        rows.push(vec![g.to_string(), r, rho, numeric.sup.to_string(), closed.to_string(), arg]);
    }
    rec.write(
        "constants.csv",
        &csv_bytes(&["gamma", "R_gamma", "rho_gamma_2", "sup_ratio_numeric", "sup_ratio_closed_form", "argmax_over_B"], &rows)?,
    )?;
    rec.check("numeric sup ratio matches closed form", worst_sup <= 1e-6, format!("max deviation {worst_sup:e}"));
    let r0 = excess_factor(MomentOrder::new(0.0)?)?;
    rec.check("R_0 = 2", r0 == 2.0, format!("R_0 = {r0}"));
    let rho = rho_constant(MomentOrder::new(0.0)?, 2)? / r0;
    rec.check("rho_{0,2}/R_0 = 1.0758", (rho - 1.0758).abs() < 5e-5, format!("rho_{{0,2}}/R_0 = {rho}"));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cluster {
    pub center: f64,
    pub width: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictedLevel {
    pub level: f64,
    pub multiplicity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterReport {
    pub b: f64,
    pub flux: u32,
    pub side: f64,
    pub h: f64,
    pub clusters: Vec<Cluster>,
    pub predicted: Vec<PredictedLevel>,
    /// Set when B·h² exceeds the resolution policy.
    pub under_resolved: bool,
}

impl ClusterReport {
    /// Checks the first `levels` clusters: count equal to the flux and
    /// center within `tol_center·B` of `B(2k+1)`.
    pub fn verify(&self, levels: usize, tol_center: f64) -> Vec<Assertion> {
        (0..levels)
            .map(|k| {
                let p = self.predicted.get(k);
                let c = self.clusters.get(k);
                match (p, c) {
                    (Some(p), Some(c)) => {
                        let ok = c.count == p.multiplicity && (c.center - p.level).abs() <= tol_center * self.b;
                        Assertion::new(
                            format!("Landau cluster {k}"),
                            ok,
                            format!("count {} (expected {}), center {} (level {})", c.count, p.multiplicity, c.center, p.level),
                        )
                    }
                    _ => Assertion::new(format!("Landau cluster {k}"), false, "cluster missing below the cutoff"),
                }
            })
            .collect()
    }
}

/// Groups sorted eigenvalues, opening a new cluster at every gap larger
/// than `gap`.
pub fn cluster_eigenvalues(eigenvalues: &[f64], gap: f64) -> Vec<Cluster> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    for &e in eigenvalues {
        match out.last_mut() {
            Some(c) if e - c.last().copied().unwrap_or(e) <= gap => c.push(e),
            _ => out.push(vec![e]),
        }
    }
    out.into_iter()
        .map(|c| Cluster {
            center: c.iter().sum::<f64>() / c.len() as f64,
            width: c[c.len() - 1] - c[0],
            count: c.len(),
        })
        .collect()
}

/// Grid for the flux-quantized square: `cells` per side if nonzero, else
/// the coarsest with `B·h² ≤ h_policy`.
fn torus_grid(b: f64, flux: u32, h_policy: f64, cells: usize) -> (f64, usize, f64) {
    if cells > 0 {
        let side = (2.0 * PI * flux as f64 / b).sqrt();
        (side, cells, side / cells as f64)
    } else {
        bounds::flux_square(b, flux, h_policy)
    }
}

/// Eigenvalues of the magnetic-periodic square with the given flux below
/// `cutoff·B`, clustered with gap `g_cluster·2B`.
pub fn torus_verify(
    b: FieldStrength,
    flux: u32,
    h_policy: f64,
    cells: usize,
    cutoff: f64,
    g_cluster: f64,
    opts: &SolverOptions,
) -> Result<(ClusterReport, SpectrumSlice)> {
    if flux == 0 {
        return Err(Error::Config("flux must be a positive integer".into()));
    }
    let bv = b.value();
    let (side, _, h) = torus_grid(bv, flux, h_policy, cells);
    flux_check(side, b, h)?;
    let op = assemble(&GridDomain::square(side, h)?, bv, BoundaryCondition::MagneticPeriodic)?;
    let slice = eigs_below_with(&op, cutoff * bv, opts)?;
    let clusters = cluster_eigenvalues(&slice.eigenvalues, g_cluster * 2.0 * bv);
    let predicted = (0..)
        .map(|k| bv * (2 * k + 1) as f64)
        .take_while(|&l| l < cutoff * bv)
        .map(|level| PredictedLevel {
            level,
            multiplicity: flux as usize,
        })
        .collect();
    let report = ClusterReport {
        b: bv,
        flux,
        side,
        h,
        clusters,
        predicted,
        under_resolved: bv * h * h > h_policy,
    };
    Ok((report, slice))
}

fn run_torus_verify(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let b = cfg.field("B")?;
    let flux = cfg.usize("flux")? as u32;
    let (report, slice) = torus_verify(
        b,
        flux,
        cfg.f64("h_policy")?,
        cfg.usize("cells")?,
        cfg.f64("cutoff")?,
        cfg.f64("g_cluster")?,
        &solver(cfg),
    )?;
    rec.write_slice("spectrum.csv", &slice)?;
    let rows: Vec<Vec<String>> = report
        .clusters
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let p = report.predicted.get(k);
            vec![
                k.to_string(),
                c.center.to_string(),
                c.width.to_string(),
                c.count.to_string(),
                p.map_or(String::new(), |p| p.level.to_string()),
                p.map_or(String::new(), |p| p.multiplicity.to_string()),
            ]
        })
        .collect();
    rec.write("clusters.csv", &csv_bytes(&["cluster", "center", "width", "count", "predicted_level", "predicted_multiplicity"], &rows)?)?;
    rec.write_json("cluster_report.json", &report)?;
    rec.check("spectrum slice complete", slice.complete, format!("{} of {} eigenvalues", slice.eigenvalues.len(), slice.count));
    rec.check(
        "resolution policy",
        !report.under_resolved,
        format!("B h^2 = {} (policy {})", b.value() * report.h * report.h, cfg.f64("h_policy")?),
    );
    for a in report.verify(cfg.usize("levels")?, cfg.f64("tol_center")?) {
        rec.assertions.push(a);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DosRow {
    pub flux: u32,
    pub side: f64,
    pub h: f64,
    pub count_dirichlet: usize,
    pub count_periodic: Option<usize>,
    /// `N/L²` for the Dirichlet square.
    pub density: f64,
    /// `B_0(B, λ)`.
    pub symbol: f64,
    pub ratio: f64,
}

fn check_off_level(b: f64, lambda: f64) -> Result<()> {
    let k = ((lambda / b - 1.0) / 2.0).round();
    if k >= 0.0 && (lambda - b * (2.0 * k + 1.0)).abs() <= 1e-6 * b {
        return Err(Error::Config(format!("λ = {lambda} is within 1e-6·B of the Landau level {}", b * (2.0 * k + 1.0))));
    }
    Ok(())
}

/// Inertia counts below `λ = lambda_over_b·B` on flux-quantized Dirichlet
/// squares (and, optionally, the magnetic-periodic squares on the same grid).
pub fn dos_scan(b: FieldStrength, lambda_over_b: f64, fluxes: &[u32], h_policy: f64, periodic: bool) -> Result<Vec<DosRow>> {
    let bv = b.value();
    let lambda = lambda_over_b * bv;
    check_off_level(bv, lambda)?;
    let symbol = magnetic_symbol_2d(b, lambda, MomentOrder::new(0.0)?).value;
    fluxes
        .iter()
        .map(|&flux| {
            let (side, _, h) = bounds::flux_square(bv, flux, h_policy);
            let domain = GridDomain::square(side, h)?;
            let nd = count_below(&assemble(&domain, bv, BoundaryCondition::Dirichlet)?, lambda)?.count;
            let np = if periodic {
                Some(count_below(&assemble(&domain, bv, BoundaryCondition::MagneticPeriodic)?, lambda)?.count)
            } else {
                None
            };
            let density = nd as f64 / domain.area();
            Ok(DosRow {
                flux,
                side,
                h,
                count_dirichlet: nd,
                count_periodic: np,
                density,
                symbol,
                ratio: if symbol > 0.0 { density / symbol } else { 0.0 },
            })
        })
        .collect()
}

fn run_dos_scan(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let b = cfg.field("B")?;
    let rows = dos_scan(b, cfg.f64("lambda")?, &cfg.u32_list("fluxes")?, cfg.f64("h_policy")?, cfg.bool("periodic")?)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.flux.to_string(),
                r.side.to_string(),
                r.h.to_string(),
                r.count_dirichlet.to_string(),
                r.count_periodic.map_or(String::new(), |n| n.to_string()),
                r.density.to_string(),
                r.symbol.to_string(),
                r.ratio.to_string(),
            ]
        })
        .collect();
    rec.write("dos.csv", &csv_bytes(&["flux", "L", "h", "N_dirichlet", "N_periodic", "N_over_L2", "symbol", "ratio"], &table)?)?;
    let increasing = rows.windows(2).all(|w| w[1].ratio > w[0].ratio);
    let ratios: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.ratio)).collect();
    rec.check("density ratio increases along the flux ladder", increasing, ratios.join(" -> "));
    if let Some(last) = rows.last() {
        let tol = cfg.f64("dos_tol")?;
        rec.check("final density ratio", last.ratio >= tol, format!("{} (threshold {tol})", last.ratio));
    }
    if cfg.bool("periodic")? {
        let ordered = rows.iter().all(|r| r.count_periodic.is_some_and(|p| r.count_dirichlet <= p));
        rec.check("Dirichlet counts below periodic counts", ordered, format!("{:?}", rows.iter().map(|r| (r.count_dirichlet, r.count_periodic)).collect::<Vec<_>>()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketRow {
    pub flux: u32,
    pub lambda: f64,
    pub neumann: usize,
    pub periodic: usize,
    pub dirichlet: usize,
    pub ordered: bool,
}

/// Counts for the three boundary conditions on matched grids.
pub fn bc_bracket(b: FieldStrength, fluxes: &[u32], lambdas_over_b: &[f64], h_policy: f64) -> Result<Vec<BracketRow>> {
    let bv = b.value();
    let mut rows = Vec::new();
    for &flux in fluxes {
        let (side, _, h) = bounds::flux_square(bv, flux, h_policy);
        let domain = GridDomain::square(side, h)?;
        let ops = [
            assemble(&domain, bv, BoundaryCondition::Neumann)?,
            assemble(&domain, bv, BoundaryCondition::MagneticPeriodic)?,
            assemble(&domain, bv, BoundaryCondition::Dirichlet)?,
        ];
        for &x in lambdas_over_b {
            let lambda = x * bv;
            let c: Vec<usize> = ops.iter().map(|op| count_below(op, lambda).map(|c| c.count)).collect::<Result<_>>()?;
            rows.push(BracketRow {
                flux,
                lambda: x,
                neumann: c[0],
                periodic: c[1],
                dirichlet: c[2],
                ordered: c[2] <= c[1] && c[1] <= c[0],
            });
        }
    }
    Ok(rows)
}

/// Exponent `p` in `N^N − N^D ∝ flux^p` between the first and last flux
/// values at each λ with a nonzero defect.
pub fn defect_exponents(rows: &[BracketRow]) -> Vec<(f64, f64)> {
    let mut lambdas: Vec<f64> = Vec::new();
    for r in rows {
        if !lambdas.contains(&r.lambda) {
            lambdas.push(r.lambda);
        }
    }
    lambdas
        .into_iter()
        .filter_map(|x| {
            let at: Vec<&BracketRow> = rows.iter().filter(|r| r.lambda == x).collect();
            let (first, last) = (at.first()?, at.last()?);
            let d1 = first.neumann as f64 - first.dirichlet as f64;
            let d2 = last.neumann as f64 - last.dirichlet as f64;
            (d1 > 0.0 && d2 > 0.0 && last.flux != first.flux).then(|| (x, (d2 / d1).ln() / (last.flux as f64 / first.flux as f64).ln()))
        })
        .collect()
}

fn run_bc_bracket(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let b = cfg.field("B")?;
    let rows = bc_bracket(b, &cfg.u32_list("fluxes")?, &cfg.f64_list("lambdas")?, cfg.f64("h_policy")?)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.flux.to_string(),
                r.lambda.to_string(),
                r.neumann.to_string(),
                r.periodic.to_string(),
                r.dirichlet.to_string(),
                if r.ordered { "ok" } else { "violation" }.to_string(),
            ]
        })
        .collect();
    rec.write("bracket.csv", &csv_bytes(&["flux", "lambda_over_B", "N_neumann", "N_periodic", "N_dirichlet", "flag"], &table)?)?;
    let bad: Vec<String> = rows.iter().filter(|r| !r.ordered).map(|r| format!("flux {} λ {}", r.flux, r.lambda)).collect();
    rec.check("N^D <= N^P <= N^N on every row", bad.is_empty(), if bad.is_empty() { "all rows ordered".into() } else { bad.join("; ") });
    let exps = defect_exponents(&rows);
    let table: Vec<Vec<String>> = exps.iter().map(|(x, p)| vec![x.to_string(), p.to_string()]).collect();
    rec.write("defect_exponent.csv", &csv_bytes(&["lambda_over_B", "exponent"], &table)?)?;
    let (lo, hi) = (cfg.f64("exponent_min")?, cfg.f64("exponent_max")?);
    let mean = exps.iter().map(|e| e.1).sum::<f64>() / exps.len().max(1) as f64;
    rec.check(
        "boundary defect grows like sqrt(flux)",
        !exps.is_empty() && mean >= lo && mean <= hi,
        format!("mean exponent {mean:.3} over {} λ values (accepted [{lo}, {hi}])", exps.len()),
    );
    Ok(())
}

/// One spectrum of the bounds test matrix.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixCase {
    pub shape: String,
    pub b: f64,
    pub flux: Option<u32>,
    pub h: f64,
    pub area: f64,
    pub tiling: bool,
    pub spectrum_file: String,
    pub eigenvalues: usize,
    pub complete: bool,
}

fn run_bounds_matrix(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let opts = solver(cfg);
    let allowance = Allowance::calibrate(cfg.usize("calibration_cells")?, cfg.f64("calibration_lambda_max")?)?;
    let h_policy = cfg.f64("h_policy")?;
    let gammas = cfg.f64_list("gammas")?;
    let grid = cfg.f64_list("lambdas")?;
    let small = cfg.f64_list("small_lambdas")?;
    let shapes = cfg.str_list("shapes");
    let mut reports: Vec<BoundReport> = Vec::new();
    let mut cases = Vec::new();
    for b in cfg.f64_list("Bs")? {
        if b < 0.0 {
            return Err(Error::Config(format!("Bs: field strengths must be >= 0, got {b}")));
        }
        let unit = if b > 0.0 { b } else { 1.0 };
        let families: Vec<BoundFamily> = if b > 0.0 {
            vec![
                BoundFamily::Polya,
                BoundFamily::Main1,
                BoundFamily::Main2,
                BoundFamily::Main1number0,
                BoundFamily::Elv,
                BoundFamily::Elv2,
                BoundFamily::Elvevs,
                BoundFamily::AppendixA,
            ]
        } else {
            vec![
                BoundFamily::Polya,
                BoundFamily::Berezin,
                BoundFamily::Liyau,
                BoundFamily::Main1number0,
                BoundFamily::AppendixA,
            ]
        };
        let mut domains: Vec<(String, Option<u32>, GridDomain, bool, Vec<f64>)> = Vec::new();
        let square_lambdas: Vec<f64> = grid.iter().map(|x| off_level(x * unit, b)).collect();
        let h_small = (h_policy / unit.max(1.0)).sqrt();
        for shape in &shapes {
            match shape.as_str() {
                "square" => {
                    for flux in cfg.u32_list("fluxes")? {
                        let (side, _, h) = bounds::flux_square(unit, flux, h_policy);
                        domains.push((format!("square-flux{flux}"), Some(flux), GridDomain::square(side, h)?, true, square_lambdas.clone()));
                    }
                }
                "disk" => {
                    let d = rasterize_domain(&Shape::Disk { radius: cfg.f64("disk_radius")? }, h_small)?;
                    domains.push(("disk".into(), None, d, false, merge_grids(&square_lambdas, &small, b)));
                }
                "lshape" => {
                    let d = rasterize_domain(&Shape::l_shape(cfg.f64("lshape_size")?), h_small)?;
                    domains.push(("lshape".into(), None, d, false, merge_grids(&square_lambdas, &small, b)));
                }
                other => return Err(Error::Config(format!("shapes: unknown shape `{other}`"))),
            }
        }
        for (name, flux, domain, tiling, lambdas) in domains {
            let op = assemble(&domain, b, BoundaryCondition::Dirichlet)?;
            let cutoff = lambdas.iter().copied().fold(0.0, f64::max);
            let slice = eigs_below_with(&op, cutoff, &opts)?;
            let file = format!("spectra/{name}-B{b}.csv");
            rec.write_slice(&file, &slice)?;
            cases.push(MatrixCase {
                shape: name.clone(),
                b,
                flux,
                h: domain.h(),
                area: domain.area(),
                tiling,
                spectrum_file: file.clone(),
                eigenvalues: slice.eigenvalues.len(),
                complete: slice.complete,
            });
            if !slice.complete {
                rec.check(format!("{name} B={b} spectrum complete"), false, format!("{} of {}", slice.eigenvalues.len(), slice.count));
                continue;
            }
            let setup = ReportSetup {
                area: domain.area(),
                b,
                h: domain.h(),
                tiling,
                allowance,
                notes: file,
            };
            reports.extend(bounds::bound_report(&slice, &setup, &families, &gammas, &lambdas)?);
        }
    }
    rec.write("bounds.csv", &bounds::reports_csv(&reports)?)?;
    rec.write_json("bounds_cases.json", &serde_json::json!({ "c_disc": allowance.c_disc, "cases": cases }))?;
    let proven_bad: Vec<String> = reports
        .iter()
        .filter(|r| r.proven && r.flag == Flag::Violation)
        .map(|r| format!("{} γ={} B={} λ={} ratio={:.4} ({})", r.family, r.gamma, r.b, r.lambda, r.ratio, r.notes))
        .collect();
    let proven_rows = reports.iter().filter(|r| r.proven).count();
    rec.check(
        "proven bounds hold within 1 + 3α",
        proven_bad.is_empty(),
        if proven_bad.is_empty() {
            format!("{proven_rows} rows, C_disc = {:.5}", allowance.c_disc)
        } else {
            proven_bad.join("; ")
        },
    );
    let probes: Vec<&BoundReport> = reports.iter().filter(|r| !r.proven && r.flag == Flag::Violation).collect();
    let intended = probes.iter().filter(|r| r.family == BoundFamily::Polya && r.b > 0.0).count();
    rec.check(
        "magnetic Pólya violation detected",
        intended > 0,
        format!("{intended} polya rows with B > 0 exceed 1 + 3α; {} probe violations in total", probes.len()),
    );
    Ok(())
}

/// Moves λ off a Landau level by 1e-6·B.
fn off_level(lambda: f64, b: f64) -> f64 {
    if b > 0.0 {
        let k = ((lambda / b - 1.0) / 2.0).round();
        if k >= 0.0 && (lambda - b * (2.0 * k + 1.0)).abs() < 1e-6 * b {
            return b * (2.0 * k + 1.0) + 1e-6 * b;
        }
    }
    lambda
}

fn merge_grids(a: &[f64], b: &[f64], field: f64) -> Vec<f64> {
    let mut v: Vec<f64> = a.iter().copied().chain(b.iter().map(|&x| off_level(x, field))).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn run_counterexample(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let gamma = MomentOrder::new(cfg.f64("gamma")?).map_err(|e| Error::Config(format!("gamma: {e}")))?;
    let b = cfg.field("B")?;
    let budget = Budget {
        max_flux: cfg.usize("max_flux")? as u32,
        max_unknowns: cfg.usize("max_unknowns")?,
        max_wall: Duration::from_secs_f64(cfg.f64("max_wall")?.max(0.0)),
        flux_res: cfg.f64("flux_res")?,
    };
    let result = bounds::counterexample_search(gamma, b, cfg.f64("epsilon")?, &budget, &solver(cfg))?;
    let spectrum_file = match &result.spectrum {
        Some(s) => {
            rec.write_slice("spectrum.csv", s)?;
            Some("spectrum.csv".to_string())
        }
        None => None,
    };
    let mut json = serde_json::to_value(&result)?;
    json["spectrum_file"] = serde_json::json!(spectrum_file);
    rec.write_json("counterexample.json", &json)?;
    let rows: Vec<Vec<String>> = result
        .rungs
        .iter()
        .map(|r| {
            vec![
                r.flux.to_string(),
                r.side.to_string(),
                r.h.to_string(),
                r.unknowns.to_string(),
                r.lambda.to_string(),
                r.lhs.to_string(),
                r.ratio.to_string(),
            ]
        })
        .collect();
    rec.write("rungs.csv", &csv_bytes(&["flux", "L", "h", "unknowns", "lambda", "lhs", "ratio"], &rows)?)?;
    rec.check(
        "counterexample certified",
        result.certified,
        format!("ratio {} vs target {} at flux {}", result.achieved_ratio, result.target, result.flux),
    );
    rec.check("ratio nondecreasing in flux", result.monotone, format!("{} rungs", result.rungs.len()));
    Ok(())
}

fn run_product_3d(cfg: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let b = cfg.field("B")?;
    let bv = b.value();
    let flux = cfg.usize("flux")? as u32;
    let interval = cfg.f64("interval")?;
    let allowance = Allowance::calibrate(cfg.usize("calibration_cells")?, cfg.f64("calibration_lambda_max")?)?;
    let (side, _, h) = bounds::flux_square(bv, flux, cfg.f64("h_policy")?);
    let domain = GridDomain::square(side, h)?;
    let lambdas: Vec<f64> = cfg.f64_list("lambdas")?.iter().map(|x| off_level(x * bv, bv)).collect();
    let cutoff = lambdas.iter().copied().fold(0.0, f64::max);
    let slice = eigs_below_with(&assemble(&domain, bv, BoundaryCondition::Dirichlet)?, cutoff, &solver(cfg))?;
    rec.write_slice("spectrum2d.csv", &slice)?;
    rec.check("2D spectrum complete", slice.complete, format!("{} of {}", slice.eigenvalues.len(), slice.count));
    if !slice.complete {
        return Ok(());
    }
    let volume = domain.area() * interval;
    // a box is a tiling domain, so every three-dimensional family applies
    let mut reports = Vec::new();
    for g in cfg.f64_list("gammas")? {
        let gamma = MomentOrder::new(g).map_err(|e| Error::Config(format!("gammas: {e}")))?;
        for &lambda in &lambdas {
            let lhs = bounds::product_moment(&slice, interval, lambda, gamma)?;
            let mut rows: Vec<(BoundFamily, f64)> = Vec::new();
            if g >= 0.5 {
                rows.push((BoundFamily::D3Magnetic, magnetic_symbol_3d(b, lambda, gamma).value * volume));
            }
            for family in [BoundFamily::D3Semiclassical, BoundFamily::D3Excess] {
                if family.admits_gamma(gamma) {
                    rows.push((family, bounds::evaluate_rhs(family, gamma, bv, lambda, volume)?));
                }
            }
            for (family, rhs) in rows {
                let ratio = if rhs > 0.0 { lhs / rhs } else if lhs == 0.0 { 0.0 } else { f64::INFINITY };
                let flag = if ratio <= 1.0 {
                    Flag::Ok
                } else if ratio <= allowance.threshold(h, lambda) {
                    Flag::Allowance
                } else {
                    Flag::Violation
                };
                reports.push(BoundReport {
                    family,
                    gamma: g,
                    b: bv,
                    lambda,
                    lhs,
                    rhs,
                    ratio,
                    domain_area: volume,
                    h,
                    flag,
                    proven: true,
                    notes: format!("square flux {flux} x interval {interval}"),
                });
            }
        }
    }
    rec.write("product3d.csv", &bounds::reports_csv(&reports)?)?;
    let bad: Vec<String> = reports
        .iter()
        .filter(|r| r.flag == Flag::Violation)
        .map(|r| format!("{} γ={} λ={} ratio={:.4}", r.family, r.gamma, r.lambda, r.ratio))
        .collect();
    rec.check(
        "three-dimensional bounds hold on the box within 1 + 3α",
        bad.is_empty(),
        if bad.is_empty() { format!("{} rows", reports.len()) } else { bad.join("; ") },
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_parsing() {
        let text = "# comment\nB = 2  # trailing\n\nflux=4\n";
        let kv = parse_key_values(text).unwrap();
        assert_eq!(kv["B"], "2");
        assert_eq!(kv["flux"], "4");
        assert!(parse_key_values("novalue\n").is_err());
        assert!(parse_key_values("a=1\na=2\n").is_err());
    }

    #[test]
    fn config_defaults_overrides_and_diagnostics() {
        let cfg = ExperimentConfig::new(Experiment::TorusVerify, Some("flux = 4\nseed = 9\n"), &[("B".into(), "2".into())], None).unwrap();
        assert_eq!(cfg.usize("flux").unwrap(), 4);
        assert_eq!(cfg.f64("B").unwrap(), 2.0);
        assert_eq!(cfg.f64("cutoff").unwrap(), 6.0);
        assert_eq!(cfg.seed, 9);
        let cfg = ExperimentConfig::new(Experiment::TorusVerify, Some("seed = 9\n"), &[], Some(3)).unwrap();
        assert_eq!(cfg.seed, 3);
        let err = ExperimentConfig::new(Experiment::TorusVerify, Some("fluxx = 4\n"), &[], None).unwrap_err();
        assert!(err.to_string().contains("unknown key `fluxx`"));
        let err = ExperimentConfig::new(Experiment::DosScan, Some("fluxes = 16,x\n"), &[], None).unwrap_err();
        assert!(err.to_string().contains("fluxes"));
        let err = ExperimentConfig::new(Experiment::DosScan, Some("experiment = torus-verify\n"), &[], None).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn clustering_by_gap() {
        let c = cluster_eigenvalues(&[0.99, 1.0, 1.01, 2.9, 3.0, 5.5], 0.4);
        assert_eq!(c.iter().map(|c| c.count).collect::<Vec<_>>(), vec![3, 2, 1]);
        assert!((c[0].center - 1.0).abs() < 1e-12);
        assert!((c[1].width - 0.1).abs() < 1e-12);
    }

    #[test]
    fn single_flux_torus() {
        let b = FieldStrength::new(2.0 * PI).unwrap();
        let (report, slice) = torus_verify(b, 1, 0.02, 0, 6.0, 0.2, &SolverOptions::default()).unwrap();
        assert!(slice.complete);
        assert!(report.verify(3, 0.05).iter().all(|a| a.passed), "{report:?}");
        let (coarse, _) = torus_verify(b, 1, 0.02, 6, 6.0, 0.2, &SolverOptions::default()).unwrap();
        assert!(coarse.under_resolved);
    }

    #[test]
    fn dos_below_first_level_is_empty() {
        let rows = dos_scan(FieldStrength::new(1.0).unwrap(), 0.5, &[4, 8], 0.02, false).unwrap();
        assert!(rows.iter().all(|r| r.count_dirichlet == 0));
        assert!(dos_scan(FieldStrength::new(1.0).unwrap(), 3.0, &[4], 0.02, false).is_err());
    }

    #[test]
    fn bracket_below_spectrum() {
        let rows = bc_bracket(FieldStrength::new(1.0).unwrap(), &[4], &[0.01], 0.02).unwrap();
        assert_eq!((rows[0].neumann, rows[0].periodic, rows[0].dirichlet), (0, 0, 0));
    }

    #[test]
    fn symbol_table_run_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::new(Experiment::SymbolTable, None, &[], None).unwrap();
        let out = run(&cfg, dir.path()).unwrap();
        assert!(out.passed(), "{:?}", out.manifest.assertions);
        let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out.manifest_path).unwrap()).unwrap();
        assert_eq!(manifest["experiment"], "symbol-table");
        assert_eq!(manifest["seed"], 1);
        assert!(dir.path().join("symbols.csv").exists());
        assert!(dir.path().join("constants.csv").exists());
    }
}
