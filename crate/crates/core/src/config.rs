//! Run configuration: a nested JSON document with one section per concern,
//! dot-path overrides, and validation against the library's type invariants.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fibering::SolveOptions;
use crate::lambda_scan::{ClassifyOptions, ScanOptions};
use crate::mesh::{Exponents, Geometry, Grid};
use crate::pohozaev_check::VerifyOptions;
use crate::radial_ode::ShootOptions;
use crate::mesh::Field;
use crate::rayleigh::{default_seeds, minimize_quotient, Quotient, QuotientOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentsConfig {
    pub q: f64,
    pub p: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "R_omega")]
    pub r_omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nz: usize,
    pub nr: usize,
}

/// Initial fields offered to the constrained minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedKind {
    /// `(1 − r/R)²`.
    Bump,
    /// The bump modulated by `1 + cos(πz/T)`.
    Modulated,
    /// Minimizer of `λ₀ᵀ(u)`.
    Lambda0,
    /// Minimizer of `λ₁ₚ(u)`.
    Lambda1p,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol_grad: f64,
    pub tol_root: f64,
    #[serde(rename = "tol_P")]
    pub tol_p: f64,
    pub tol_res: f64,
    #[serde(rename = "tol_J")]
    pub tol_j: f64,
    pub newton_iters: usize,
    pub seeds: Vec<SeedKind>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            max_iters: d.max_iters,
            tol_grad: d.tol_grad,
            tol_root: d.tol_root,
            tol_p: d.tol_p,
            tol_res: d.tol_res,
            tol_j: d.tol_j,
            newton_iters: d.newton_iters,
            seeds: vec![SeedKind::Bump, SeedKind::Modulated, SeedKind::Lambda0, SeedKind::Lambda1p],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtremalsConfig {
    pub max_iters: usize,
    pub tol_grad: f64,
}

impl Default for ExtremalsConfig {
    fn default() -> Self {
        let d = QuotientOptions::default();
        Self { max_iters: d.max_iters, tol_grad: d.tol_grad }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Explicit sweep values; empty means "bracket λ*(T) only".
    pub lambda_list: Vec<f64>,
    pub bisect_tol: f64,
    pub coarse_points: usize,
    #[serde(rename = "tol_Z")]
    pub tol_z: f64,
    pub eps_supp: f64,
    pub eps_flux: f64,
    pub eps_ztriv: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        let s = ScanOptions::default();
        let c = ClassifyOptions::default();
        Self {
            lambda_list: Vec::new(),
            bisect_tol: s.bisect_tol,
            coarse_points: s.coarse_points,
            tol_z: s.tol_z,
            eps_supp: c.eps_supp,
            eps_flux: c.eps_flux,
            eps_ztriv: c.eps_ztriv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShootConfig {
    pub tol_shoot: f64,
    pub a_hi: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for ShootConfig {
    fn default() -> Self {
        let d = ShootOptions::default();
        Self { tol_shoot: d.tol_shoot, a_hi: d.a_hi, rtol: d.rtol, atol: d.atol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub max_solution_residual: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { max_solution_residual: VerifyOptions::default().max_solution_residual }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub out_dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { out_dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub exponents: ExponentsConfig,
    pub geometry: GeometryConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub extremals: ExtremalsConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub shoot: ShootConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for Config {
    /// `(q, p, N) = (0.1, 0.2, 4)` on the unit cylinder at 64×64.
    fn default() -> Self {
        Self {
            exponents: ExponentsConfig { q: 0.1, p: 0.2, n: 4 },
            geometry: GeometryConfig { t: 1.0, r_omega: 1.0 },
            grid: GridConfig { nz: 64, nr: 64 },
            solver: SolverConfig::default(),
            extremals: ExtremalsConfig::default(),
            scan: ScanConfig::default(),
            shoot: ShootConfig::default(),
            verify: VerifyConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

/// Sets `path` (dot separated) in a JSON tree. The raw value is parsed as JSON
/// when possible and taken as a string otherwise. Unknown keys are caught when the
/// tree is deserialized.
pub fn apply_override(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(config_err(format!("malformed override path '{path}'")));
    }
    let value = serde_json::from_str::<Value>(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for (depth, key) in keys.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| config_err(format!("'{}' is not a section", keys[..depth].join("."))))?;
        if depth + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        node = obj.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("path has at least one key")
}

impl Config {
    /// Parses a JSON document, applies overrides, and validates.
    pub fn from_json_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut v: Value = serde_json::from_str(text).map_err(config_err)?;
        for (k, raw) in overrides {
            apply_override(&mut v, k, raw)?;
        }
        let c: Config = serde_json::from_value(v).map_err(config_err)?;
        c.validate()?;
        Ok(c)
    }

    /// Loads `path` (or the built-in defaults when `None`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| config_err(format!("cannot read {}: {e}", p.display())))?,
            None => serde_json::to_string(&Config::default())?,
        };
        Self::from_json_with_overrides(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.exponents()?;
        self.grid()?;
        let positive = [
            ("solver.tol_grad", self.solver.tol_grad),
            ("solver.tol_root", self.solver.tol_root),
            ("solver.tol_P", self.solver.tol_p),
            ("solver.tol_res", self.solver.tol_res),
            ("solver.tol_J", self.solver.tol_j),
            ("extremals.tol_grad", self.extremals.tol_grad),
            ("scan.bisect_tol", self.scan.bisect_tol),
            ("scan.tol_Z", self.scan.tol_z),
            ("scan.eps_supp", self.scan.eps_supp),
            ("scan.eps_flux", self.scan.eps_flux),
            ("scan.eps_ztriv", self.scan.eps_ztriv),
            ("shoot.tol_shoot", self.shoot.tol_shoot),
            ("shoot.rtol", self.shoot.rtol),
            ("shoot.atol", self.shoot.atol),
            ("verify.max_solution_residual", self.verify.max_solution_residual),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_err(format!("{name} must be a positive finite number, got {v}")));
            }
        }
        if !(self.shoot.a_hi > 1.0 && self.shoot.a_hi.is_finite()) {
            return Err(config_err(format!("shoot.a_hi must exceed 1, got {}", self.shoot.a_hi)));
        }
        if self.solver.max_iters == 0 || self.extremals.max_iters == 0 {
            return Err(config_err("iteration limits must be positive"));
        }
        if self.solver.seeds.is_empty() {
            return Err(config_err("solver.seeds must not be empty"));
        }
        if self.scan.coarse_points == 0 {
            return Err(config_err("scan.coarse_points must be positive"));
        }
        if let Some(l) = self.scan.lambda_list.iter().find(|l| !l.is_finite()) {
            return Err(config_err(format!("scan.lambda_list contains {l}")));
        }
        Ok(())
    }

    pub fn exponents(&self) -> Result<Exponents> {
        Exponents::new(self.exponents.q, self.exponents.p, self.exponents.n).map_err(config_err)
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::new(self.geometry.t, self.geometry.r_omega, self.exponents.n).map_err(config_err)
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::new(self.geometry()?, self.grid.nz, self.grid.nr).map_err(config_err)
    }

    pub fn classify_options(&self) -> ClassifyOptions {
        ClassifyOptions { eps_supp: self.scan.eps_supp, eps_flux: self.scan.eps_flux, eps_ztriv: self.scan.eps_ztriv }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_iters: self.solver.max_iters,
            tol_grad: self.solver.tol_grad,
            tol_root: self.solver.tol_root,
            tol_p: self.solver.tol_p,
            tol_res: self.solver.tol_res,
            tol_j: self.solver.tol_j,
            newton_iters: self.solver.newton_iters,
            classify: self.classify_options(),
        }
    }

    pub fn quotient_options(&self) -> QuotientOptions {
        QuotientOptions { max_iters: self.extremals.max_iters, tol_grad: self.extremals.tol_grad }
    }

    pub fn scan_options(&self) -> ScanOptions {
        ScanOptions {
            solve: self.solve_options(),
            bisect_tol: self.scan.bisect_tol,
            coarse_points: self.scan.coarse_points,
            tol_z: self.scan.tol_z,
        }
    }

    pub fn shoot_options(&self) -> ShootOptions {
        ShootOptions {
            tol_shoot: self.shoot.tol_shoot,
            a_hi: self.shoot.a_hi,
            rtol: self.shoot.rtol,
            atol: self.shoot.atol,
            ..ShootOptions::default()
        }
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions { max_solution_residual: self.verify.max_solution_residual }
    }
}

/// Materializes seed fields on `grid`. Quotient minimizers start from the two
/// analytic seeds.
pub fn build_seeds(kinds: &[SeedKind], exps: &Exponents, grid: &Arc<Grid>, qopts: &QuotientOptions) -> Result<Vec<Field>> {
    let analytic = default_seeds(grid);
    let mut out = Vec::with_capacity(kinds.len());
    for k in kinds {
        out.push(match k {
            SeedKind::Bump => analytic[0].clone(),
            SeedKind::Modulated => analytic[1].clone(),
            SeedKind::Lambda0 => minimize_quotient(Quotient::Lambda0, exps, grid, &analytic, qopts)?.minimizer,
            SeedKind::Lambda1p => minimize_quotient(Quotient::Lambda1P, exps, grid, &analytic, qopts)?.minimizer,
        });
    }
    Ok(out)
}
