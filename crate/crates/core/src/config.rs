//! Run configuration.
//!
//! A config file is TOML. Only `case` is required; every other key has a
//! default. Geometry entries are preset names or paths to a unit-cell TOML
//! file (relative paths resolve against the config file's directory).
//!
//! ```toml
//! case = "2i"
//!
//! [geometry]
//! fat = "fat-vertical-2d"
//! skin = "skin2-tjunction-2d"
//!
//! [grid]
//! cell = 32
//! macro = [32, 32]
//!
//! [domain]
//! extent = [1.0]
//! depth = 1.0
//! delta = 0.1
//!
//! [physics]
//! p_artery = { mean = 1.0, amplitude = 0.2, wavenumber = [1.0] }
//! decay = { times = [0.0, 1.0], values = [0.1, 0.2] }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::{presets, CellKind, UnitCellSpec};
use crate::linalg::SolverOptions;
use crate::macro_flow::FlowCase;
use crate::macro_oxygen::Advection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub case: FlowCase,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub dns: DnsConfig,
    /// Directory relative geometry paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    #[serde(default = "default_fat")]
    pub fat: String,
    /// Defaults to the T-junction cell of the selected case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skin: Option<String>,
}

fn default_fat() -> String {
    "fat-vertical-2d".into()
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            fat: default_fat(),
            skin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Voxels per axis of every unit cell.
    #[serde(default = "default_cell_grid")]
    pub cell: usize,
    /// Macro cells per axis, depth last.
    #[serde(default = "default_macro_grid", rename = "macro")]
    pub macro_cells: Vec<usize>,
    #[serde(default = "default_slab_layers")]
    pub slab_layers: usize,
}

fn default_cell_grid() -> usize {
    32
}
fn default_macro_grid() -> Vec<usize> {
    vec![32, 32]
}
fn default_slab_layers() -> usize {
    8
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cell: default_cell_grid(),
            macro_cells: default_macro_grid(),
            slab_layers: default_slab_layers(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    /// Horizontal extents.
    #[serde(default = "default_extent")]
    pub extent: Vec<f64>,
    #[serde(default = "one")]
    pub depth: f64,
    /// Skin slab thickness, required for case 2i.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

fn default_extent() -> Vec<f64> {
    vec![1.0]
}
fn one() -> f64 {
    1.0
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            extent: default_extent(),
            depth: 1.0,
            delta: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_tolerance() -> f64 {
    1e-8
}
fn default_max_iterations() -> usize {
    50_000
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: default_tolerance(),
            max_iterations: default_max_iterations(),
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
        }
    }
}

/// Scalar data on the horizontal coordinates:
/// `mean + amplitude * prod_i cos(2 pi k_i x_i / extent_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DataSpec {
    Constant(f64),
    Cosine {
        mean: f64,
        amplitude: f64,
        wavenumber: Vec<f64>,
    },
}

impl DataSpec {
    pub fn field(&self, extent: &[f64]) -> Field {
        match self {
            DataSpec::Constant(c) => Field::Constant(*c),
            DataSpec::Cosine {
                mean,
                amplitude,
                wavenumber,
            } => {
                let (m, a) = (*mean, *amplitude);
                let k: Vec<f64> = wavenumber
                    .iter()
                    .zip(extent)
                    .map(|(k, l)| 2.0 * std::f64::consts::PI * k / l)
                    .collect();
                Field::function(move |x| m + a * k.iter().enumerate().map(|(i, k)| (k * x[i]).cos()).product::<f64>())
            }
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            DataSpec::Constant(c) => *c,
            DataSpec::Cosine { mean, amplitude, .. } => mean - amplitude.abs(),
        }
    }

    fn check(&self, path: &str, horizontal: usize, nonnegative: bool, errs: &mut Vec<String>) {
        match self {
            DataSpec::Constant(c) if !c.is_finite() => errs.push(format!("{path}: must be finite")),
            DataSpec::Cosine {
                mean,
                amplitude,
                wavenumber,
            } => {
                if !mean.is_finite() || !amplitude.is_finite() || wavenumber.iter().any(|k| !k.is_finite()) {
                    errs.push(format!("{path}: must be finite"));
                }
                if wavenumber.len() != horizontal {
                    errs.push(format!(
                        "{path}.wavenumber: expected {horizontal} entries, got {}",
                        wavenumber.len()
                    ));
                }
            }
            _ => {}
        }
        if nonnegative && self.min() < 0.0 {
            errs.push(format!("{path}: concentration data must be nonnegative"));
        }
    }
}

/// Tissue decay rate, constant in space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DecaySpec {
    Constant(f64),
    Samples { times: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConfig {
    #[serde(default = "one")]
    pub viscosity: f64,
    /// Diffusivity of artery, vein and tissue.
    #[serde(default = "default_diffusion")]
    pub diffusion: [f64; 3],
    /// Wall permeability of artery and vein.
    #[serde(default = "default_lambda")]
    pub lambda: [f64; 2],
    #[serde(default = "default_decay")]
    pub decay: DecaySpec,
    #[serde(default = "default_pa")]
    pub p_artery: DataSpec,
    #[serde(default = "default_pv")]
    pub p_vein: DataSpec,
    /// Oxygen supplied at the bottom face.
    #[serde(default = "default_pa")]
    pub c_artery: DataSpec,
    #[serde(default = "default_pv")]
    pub c_vein: DataSpec,
    /// Uniform initial concentration of every phase.
    #[serde(default)]
    pub c_initial: f64,
}

fn default_diffusion() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}
fn default_lambda() -> [f64; 2] {
    [1.0, 1.0]
}
fn default_decay() -> DecaySpec {
    DecaySpec::Constant(0.1)
}
fn default_pa() -> DataSpec {
    DataSpec::Constant(1.0)
}
fn default_pv() -> DataSpec {
    DataSpec::Constant(0.0)
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            viscosity: 1.0,
            diffusion: default_diffusion(),
            lambda: default_lambda(),
            decay: default_decay(),
            p_artery: default_pa(),
            p_vein: default_pv(),
            c_artery: default_pa(),
            c_vein: default_pv(),
            c_initial: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeConfig {
    /// Defaults to `L^2 / (100 max eig A)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    #[serde(default = "default_advection")]
    pub advection: Advection,
}

fn default_final_time() -> f64 {
    0.1
}
fn default_output_every() -> usize {
    10
}
fn default_advection() -> Advection {
    Advection::Upwind
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            dt: None,
            final_time: default_final_time(),
            output_every: default_output_every(),
            advection: default_advection(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

/// Settings of the micro-scale epsilon sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnsConfig {
    #[serde(default = "default_dns_cell")]
    pub cell: String,
    #[serde(default = "default_dns_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "default_dns_voxels")]
    pub voxels_per_cell: usize,
    #[serde(default = "default_dns_diffusion")]
    pub diffusion: [f64; 3],
    #[serde(default = "default_lambda")]
    pub lambda: [f64; 2],
    #[serde(default = "default_dns_decay")]
    pub decay: f64,
    /// Initial data `mean + amplitude cos(2 pi x) cos(2 pi y)`.
    #[serde(default = "one")]
    pub mean: f64,
    #[serde(default = "default_dns_amplitude")]
    pub amplitude: f64,
    #[serde(default = "default_dns_dt")]
    pub dt: f64,
    #[serde(default = "default_final_time")]
    pub final_time: f64,
    #[serde(default = "default_dns_output")]
    pub output_every: usize,
    #[serde(default = "default_dns_rate")]
    pub rate_threshold: f64,
    /// Factor on the effective tensors of the negative control.
    #[serde(default = "default_dns_control")]
    pub control_scale: f64,
}

fn default_dns_cell() -> String {
    presets::DNS.into()
}
fn default_dns_ns() -> Vec<usize> {
    vec![4, 8, 16]
}
fn default_dns_voxels() -> usize {
    16
}
fn default_dns_diffusion() -> [f64; 3] {
    [1.0, 0.5, 0.2]
}
fn default_dns_decay() -> f64 {
    0.1
}
fn default_dns_amplitude() -> f64 {
    0.5
}
fn default_dns_dt() -> f64 {
    2e-3
}
fn default_dns_output() -> usize {
    5
}
fn default_dns_rate() -> f64 {
    0.9
}
fn default_dns_control() -> f64 {
    2.0
}

impl Default for DnsConfig {
    fn default() -> Self {
        Self {
            cell: default_dns_cell(),
            ns: default_dns_ns(),
            voxels_per_cell: default_dns_voxels(),
            diffusion: default_dns_diffusion(),
            lambda: default_lambda(),
            decay: default_dns_decay(),
            mean: 1.0,
            amplitude: default_dns_amplitude(),
            dt: default_dns_dt(),
            final_time: default_final_time(),
            output_every: default_dns_output(),
            rate_threshold: default_dns_rate(),
            control_scale: default_dns_control(),
        }
    }
}

impl DnsConfig {
    fn check(&self, cfg: &RunConfig, e: &mut Vec<String>) {
        match cfg.resolve(&self.cell) {
            Err(err) => e.push(format!("dns.cell: {err}")),
            Ok(spec) if spec.dim != 2 || spec.kind != CellKind::Fat => {
                e.push("dns.cell: the sweep needs a 2D fat cell".into())
            }
            _ => {}
        }
        if self.ns.len() < 2 || self.ns.iter().any(|&n| n < 2) || self.ns.windows(2).any(|w| w[1] <= w[0]) {
            e.push("dns.ns: need at least two increasing cell counts, each at least 2".into());
        }
        if self.voxels_per_cell < 4 {
            e.push("dns.voxels_per_cell: need at least 4".into());
        }
        if self.diffusion.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            e.push("dns.diffusion: must be positive".into());
        }
        if self.lambda.iter().chain([&self.decay]).any(|l| !(*l >= 0.0 && l.is_finite())) {
            e.push("dns.lambda, dns.decay: must be nonnegative".into());
        }
        if !(self.mean.is_finite() && self.amplitude.is_finite() && self.mean - self.amplitude.abs() >= 0.0) {
            e.push("dns.mean, dns.amplitude: initial data must be nonnegative".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            e.push("dns.dt: must be positive".into());
        }
        if !(self.final_time >= 0.0 && self.final_time.is_finite()) {
            e.push("dns.final_time: must be nonnegative".into());
        }
        if self.output_every == 0 {
            e.push("dns.output_every: must be positive".into());
        }
        if !(self.rate_threshold.is_finite() && self.control_scale > 0.0 && self.control_scale.is_finite()) {
            e.push("dns.rate_threshold, dns.control_scale: must be finite, scale positive".into());
        }
    }

    pub fn cell_spec(&self, cfg: &RunConfig) -> Result<UnitCellSpec> {
        cfg.resolve(&self.cell)
    }
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

/// Parses and validates a config. Relative geometry paths resolve against
/// the working directory.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_in(text, None)
}

/// Reads a config file; relative paths resolve against its directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_in(&text, path.parent().map(Path::to_path_buf))
}

pub fn parse_config_in(text: &str, base_dir: Option<PathBuf>) -> Result<RunConfig> {
    let de = toml::de::Deserializer::parse(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        Error::Parse {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    let mut unknown = Vec::new();
    let mut note = |p: serde_ignored::Path<'_>| unknown.push(p.to_string());
    let parsed: std::result::Result<RunConfig, _> =
        serde_path_to_error::deserialize(serde_ignored::Deserializer::new(de, &mut note));
    let mut errs: Vec<String> = unknown.iter().map(|k| format!("{k}: unknown key")).collect();
    let mut cfg = match parsed {
        Ok(cfg) => cfg,
        Err(e) => {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let at = inner
                .span()
                .map(|s| {
                    let (l, c) = line_column(text, s.start);
                    format!(" (line {l}, column {c})")
                })
                .unwrap_or_default();
            errs.push(format!("{path}: {}{at}", inner.message().trim()));
            return Err(Error::Validation(errs));
        }
    };
    cfg.base_dir = base_dir;
    errs.extend(cfg.violations());
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Validation(errs))
    }
}

impl RunConfig {
    /// Defaults for everything but the case.
    pub fn new(case: FlowCase) -> Self {
        let mut cfg = Self {
            case,
            geometry: GeometryConfig::default(),
            grid: GridConfig::default(),
            domain: DomainConfig::default(),
            solver: SolverConfig::default(),
            physics: PhysicsConfig::default(),
            time: TimeConfig::default(),
            output: OutputConfig::default(),
            dns: DnsConfig::default(),
            base_dir: None,
        };
        if case == FlowCase::Case2Intermediate {
            cfg.domain.delta = Some(0.1);
        }
        cfg
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn skin_name(&self) -> &str {
        self.geometry.skin.as_deref().unwrap_or(match self.case {
            FlowCase::Case1 => "skin1-tjunction-2d",
            _ => "skin2-tjunction-2d",
        })
    }

    fn resolve(&self, name: &str) -> Result<UnitCellSpec> {
        if presets::names().contains(&name) {
            return presets::cell(name);
        }
        let mut path = PathBuf::from(name);
        if path.is_relative() {
            if let Some(base) = &self.base_dir {
                path = base.join(path);
            }
        }
        if !path.is_file() {
            return Err(Error::InvalidArgument(format!(
                "`{name}` is neither a preset nor an existing file"
            )));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let spec: UnitCellSpec = toml::from_str(&text)
            .map_err(|e| Error::InvalidArgument(format!("{}: {}", path.display(), e.message().trim())))?;
        Ok(spec)
    }

    pub fn fat_cell(&self) -> Result<UnitCellSpec> {
        self.resolve(&self.geometry.fat)
    }

    pub fn skin_cell(&self) -> Result<UnitCellSpec> {
        self.resolve(self.skin_name())
    }

    pub fn stepper_dt(&self) -> Option<f64> {
        self.time.dt
    }

    /// Every violation, each prefixed with its field path.
    pub fn violations(&self) -> Vec<String> {
        let mut e = Vec::new();
        let dim = self.grid.macro_cells.len();
        if !(2..=3).contains(&dim) {
            e.push(format!("grid.macro: expected 2 or 3 entries, got {dim}"));
        }
        if self.grid.macro_cells.iter().any(|&n| n < 2) {
            e.push("grid.macro: every axis needs at least 2 cells".into());
        }
        if self.grid.cell < 4 {
            e.push(format!("grid.cell: need at least 4 voxels, got {}", self.grid.cell));
        }
        if self.grid.slab_layers == 0 {
            e.push("grid.slab_layers: must be positive".into());
        }
        if self.domain.extent.len() + 1 != dim {
            e.push(format!(
                "domain.extent: expected {} entries for a {dim}D grid, got {}",
                dim.saturating_sub(1),
                self.domain.extent.len()
            ));
        }
        if self.domain.extent.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            e.push("domain.extent: must be positive".into());
        }
        if !(self.domain.depth > 0.0 && self.domain.depth.is_finite()) {
            e.push("domain.depth: must be positive".into());
        }
        match (self.case, self.domain.delta) {
            (FlowCase::Case2Intermediate, None) => e.push("domain.delta: required for case 2i".into()),
            (_, Some(d)) if !(d > 0.0 && d.is_finite()) => e.push("domain.delta: must be positive".into()),
            _ => {}
        }
        let tol = self.solver.tolerance;
        if !(tol > 0.0 && tol < 1.0) {
            e.push(format!("solver.tolerance: must lie in (0, 1), got {tol}"));
        }
        if self.solver.max_iterations == 0 {
            e.push("solver.max_iterations: must be positive".into());
        }
        let p = &self.physics;
        if !(p.viscosity > 0.0 && p.viscosity.is_finite()) {
            e.push("physics.viscosity: must be positive".into());
        }
        if p.diffusion.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            e.push("physics.diffusion: must be positive".into());
        }
        if p.lambda.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            e.push("physics.lambda: must be nonnegative".into());
        }
        match &p.decay {
            DecaySpec::Constant(d) if !(*d >= 0.0 && d.is_finite()) => {
                e.push("physics.decay: must be nonnegative".into())
            }
            DecaySpec::Samples { times, values } => {
                if times.is_empty() || times.len() != values.len() {
                    e.push("physics.decay: times and values need the same nonzero length".into());
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    e.push("physics.decay.times: must be strictly increasing".into());
                }
                if values.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
                    e.push("physics.decay.values: must be nonnegative".into());
                }
            }
            _ => {}
        }
        let h = dim.saturating_sub(1);
        p.p_artery.check("physics.p_artery", h, false, &mut e);
        p.p_vein.check("physics.p_vein", h, false, &mut e);
        p.c_artery.check("physics.c_artery", h, true, &mut e);
        p.c_vein.check("physics.c_vein", h, true, &mut e);
        if !(p.c_initial >= 0.0 && p.c_initial.is_finite()) {
            e.push("physics.c_initial: must be nonnegative".into());
        }
        if let Some(dt) = self.time.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                e.push("time.dt: must be positive".into());
            }
        }
        if !(self.time.final_time >= 0.0 && self.time.final_time.is_finite()) {
            e.push("time.final_time: must be nonnegative".into());
        }
        if self.time.output_every == 0 {
            e.push("time.output_every: must be positive".into());
        }
        self.dns.check(self, &mut e);
        let want_skin = if self.case == FlowCase::Case1 {
            CellKind::SkinCase1
        } else {
            CellKind::SkinCase2
        };
        for (key, want, res) in [
            ("geometry.fat", CellKind::Fat, self.fat_cell()),
            ("geometry.skin", want_skin, self.skin_cell()),
        ] {
            match res {
                Err(err) => e.push(format!("{key}: {err}")),
                Ok(spec) => {
                    if spec.kind != want {
                        e.push(format!("{key}: expected a {} cell, got {}", want.name(), spec.kind.name()));
                    }
                    if spec.dim != dim {
                        e.push(format!("{key}: cell is {}D but the macro grid is {dim}D", spec.dim));
                    }
                }
            }
        }
        e
    }
}
