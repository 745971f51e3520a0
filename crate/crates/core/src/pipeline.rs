//! Cell solves, macro flow and oxygen transport driven by one config.
//!
//! Output layout under the output directory:
//!
//! ```text
//! tensors/*.csv        effective tensors, one file each
//! fields/*.vtk         pressures and final concentrations
//! fields/*.csv         element velocities, oxygen history
//! report.toml          deterministic run summary
//! provenance.toml      version, hashes, residuals and wall-clock time
//! cache/<hash>.toml    cell results keyed by their inputs
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DecaySpec, RunConfig};
use crate::dns::{epsilon_sweep, CosineMode, MicroStepper, SweepConfig, SweepReport};
use crate::diffusion::{effective_diffusion, DiffusionCoefficient, PhaseAverages};
use crate::error::{Error, Result};
use crate::field::{Field, TimeField};
use crate::geometry::{build_mask, measure_cell, CellMask, GridSpec, PhaseSelector, UnitCellSpec};
use crate::io::{self, Table, VtkField};
use crate::linalg::SolverOptions;
use crate::macro_flow::{compute_velocities, solve_flow, FlowCase, MacroDomain, MacroFlowProblem, MacroFlowSolution};
use crate::macro_oxygen::{
    default_time_step, run_transient, skin_grid, InitialData, OxygenCoefficients, OxygenProblem, OxygenSources,
    OxygenState, SkinCoefficients, StepperConfig, TransportFluxes,
};
use crate::stokes::permeability;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Row-major matrix in a serializable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: Vec<Vec<f64>>,
}

impl From<&DMatrix<f64>> for Tensor {
    fn from(m: &DMatrix<f64>) -> Self {
        Self {
            rows: (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect(),
        }
    }
}

impl Tensor {
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.rows.len();
        let m = self.rows.first().map_or(0, Vec::len);
        DMatrix::from_row_iterator(n, m, self.rows.iter().flatten().copied())
    }
}

/// Everything the macro models need from the unit cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResults {
    pub k_artery: Tensor,
    pub k_vein: Tensor,
    pub k_skin: Tensor,
    pub a_artery: Tensor,
    pub a_vein: Tensor,
    pub a_tissue: Tensor,
    pub a_skin_blood: Tensor,
    pub a_skin_tissue: Tensor,
    /// Fat-cell volume fractions of artery, vein and tissue.
    pub theta: [f64; 3],
    /// Fat-cell wall measures of artery and vein.
    pub gamma: [f64; 2],
    /// Skin-cell volume fractions of blood and tissue.
    pub skin_theta: [f64; 2],
    /// Skin-cell wall measures of artery and vein.
    pub skin_gamma: [f64; 2],
    /// Largest relative residual over each family of cell solves, and the
    /// largest relative asymmetry removed by symmetrizing the tensors.
    pub residuals: BTreeMap<String, f64>,
    pub iterations: BTreeMap<String, usize>,
}

impl CellResults {
    pub fn tensors(&self) -> [(&'static str, &Tensor); 8] {
        [
            ("k_artery", &self.k_artery),
            ("k_vein", &self.k_vein),
            ("k_skin", &self.k_skin),
            ("a_artery", &self.a_artery),
            ("a_vein", &self.a_vein),
            ("a_tissue", &self.a_tissue),
            ("a_skin_blood", &self.a_skin_blood),
            ("a_skin_tissue", &self.a_skin_tissue),
        ]
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sha256(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex(&h.finalize())
}

fn spec_text(spec: &UnitCellSpec) -> String {
    toml::to_string(spec).expect("cell spec serializes")
}

/// Hash of the whole config with geometry files resolved. The output
/// directory is excluded.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.output = Default::default();
    let fat = spec_text(&cfg.fat_cell()?);
    let skin = spec_text(&cfg.skin_cell()?);
    Ok(sha256(&[VERSION.as_bytes(), c.to_toml().as_bytes(), fat.as_bytes(), skin.as_bytes()]))
}

/// Hash of every input the cell solves depend on.
pub fn cell_hash(cfg: &RunConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Key<'a> {
        version: &'a str,
        fat: UnitCellSpec,
        skin: UnitCellSpec,
        grid: usize,
        tolerance: f64,
        max_iterations: usize,
        viscosity: f64,
        diffusion: [f64; 3],
    }
    let key = Key {
        version: VERSION,
        fat: cfg.fat_cell()?,
        skin: cfg.skin_cell()?,
        grid: cfg.grid.cell,
        tolerance: cfg.solver.tolerance,
        max_iterations: cfg.solver.max_iterations,
        viscosity: cfg.physics.viscosity,
        diffusion: cfg.physics.diffusion,
    };
    Ok(sha256(&[toml::to_string(&key).expect("key serializes").as_bytes()]))
}

pub fn cell_mask(spec: &UnitCellSpec, n: usize) -> Result<CellMask> {
    build_mask(spec, &GridSpec::uniform(spec.dim, n)?)
}

/// Permeability of one blood phase; zero when the phase is absent.
fn phase_permeability(
    mask: &CellMask,
    sel: PhaseSelector,
    mu: f64,
    solver: SolverOptions,
    stats: &mut (f64, usize),
) -> Result<DMatrix<f64>> {
    let m = crate::stokes::StokesBc::for_kind(mask.kind()).directions(mask.dim());
    if mask.count_selected(sel) == 0 {
        return Ok(DMatrix::zeros(m, m));
    }
    let (k, _) = permeability(mask, sel, mu, solver)?;
    stats.0 = k.residuals.iter().fold(stats.0, |a, &r| a.max(r));
    stats.1 += k.iterations.iter().sum::<usize>();
    Ok(k.k)
}

fn phase_diffusion(
    mask: &CellMask,
    sel: PhaseSelector,
    coef: &DiffusionCoefficient,
    solver: SolverOptions,
    stats: &mut (f64, usize),
) -> Result<DMatrix<f64>> {
    let m = crate::diffusion::directions(mask.kind(), mask.dim());
    if mask.count_selected(sel) == 0 {
        return Ok(DMatrix::zeros(m, m));
    }
    let (a, _) = effective_diffusion(mask, sel, coef, solver)?;
    stats.0 = a.residuals.iter().fold(stats.0, |x, &r| x.max(r));
    stats.1 += a.iterations.iter().sum::<usize>();
    Ok(a.a)
}

/// Per-voxel diffusivity from the phase labels.
pub fn phase_coefficient(mask: &CellMask, d: [f64; 3]) -> DiffusionCoefficient {
    DiffusionCoefficient::Diagonal(
        mask.phases()
            .iter()
            .map(|&p| {
                let v = d[p as usize];
                [v, v, v]
            })
            .collect(),
    )
}

/// Solves every cell problem the macro models need. Tensors are stored
/// symmetrized with roundoff-level entries cleared.
pub fn compute_cell_results(cfg: &RunConfig) -> Result<CellResults> {
    let solver = cfg.solver.options();
    let mu = cfg.physics.viscosity;
    let d = cfg.physics.diffusion;
    let fat = cell_mask(&cfg.fat_cell()?, cfg.grid.cell).map_err(|e| e.context("fat cell"))?;
    let skin = cell_mask(&cfg.skin_cell()?, cfg.grid.cell).map_err(|e| e.context("skin cell"))?;
    let mut stokes = (0.0, 0);
    let mut diff = (0.0, 0);
    let k_artery = phase_permeability(&fat, PhaseSelector::Artery, mu, solver, &mut stokes)
        .map_err(|e| e.context("fat cell artery permeability"))?;
    let k_vein = phase_permeability(&fat, PhaseSelector::Vein, mu, solver, &mut stokes)
        .map_err(|e| e.context("fat cell vein permeability"))?;
    let k_skin = phase_permeability(&skin, PhaseSelector::Blood, mu, solver, &mut stokes)
        .map_err(|e| e.context("skin cell permeability"))?;
    let mut a = Vec::new();
    for (sel, d) in [(PhaseSelector::Artery, d[0]), (PhaseSelector::Vein, d[1]), (PhaseSelector::Tissue, d[2])] {
        a.push(
            phase_diffusion(&fat, sel, &DiffusionCoefficient::Constant(d), solver, &mut diff)
                .map_err(|e| e.context(format!("fat cell {} diffusion", sel.name())))?,
        );
    }
    let skin_coef = phase_coefficient(&skin, d);
    let a_skin_blood = phase_diffusion(&skin, PhaseSelector::Blood, &skin_coef, solver, &mut diff)
        .map_err(|e| e.context("skin cell blood diffusion"))?;
    let a_skin_tissue = phase_diffusion(&skin, PhaseSelector::Tissue, &skin_coef, solver, &mut diff)
        .map_err(|e| e.context("skin cell tissue diffusion"))?;
    // roundoff below 1e-12 of the family scale is cleared so that
    // non-percolating directions come out exactly zero
    let k_scale = [&k_artery, &k_vein, &k_skin].iter().map(|m| m.amax()).fold(0.0, f64::max);
    let a_scale = d.iter().fold(0.0_f64, |m, v| m.max(*v));
    let mut asym = 0.0_f64;
    let mut clean = |m: &DMatrix<f64>, scale: f64| -> Tensor {
        if scale > 0.0 {
            asym = asym.max((m - m.transpose()).amax() / scale);
        }
        let s = (m + m.transpose()) * 0.5;
        (&s.map(|v| if v.abs() <= 1e-12 * scale { 0.0 } else { v })).into()
    };
    let (k_artery, k_vein, k_skin) = (clean(&k_artery, k_scale), clean(&k_vein, k_scale), clean(&k_skin, k_scale));
    let (a_artery, a_vein, a_tissue) = (clean(&a[0], a_scale), clean(&a[1], a_scale), clean(&a[2], a_scale));
    let (a_skin_blood, a_skin_tissue) = (clean(&a_skin_blood, a_scale), clean(&a_skin_tissue, a_scale));
    let fm = measure_cell(&fat);
    let sm = measure_cell(&skin);
    Ok(CellResults {
        k_artery,
        k_vein,
        k_skin,
        a_artery,
        a_vein,
        a_tissue,
        a_skin_blood,
        a_skin_tissue,
        theta: fm.theta,
        gamma: fm.surface,
        skin_theta: [sm.theta[0] + sm.theta[1], sm.theta[2]],
        skin_gamma: sm.surface,
        residuals: BTreeMap::from([
            ("stokes".into(), stokes.0),
            ("diffusion".into(), diff.0),
            ("asymmetry".into(), asym),
        ]),
        iterations: BTreeMap::from([("stokes".into(), stokes.1), ("diffusion".into(), diff.1)]),
    })
}

/// Cell results from `cache_dir` when the inputs match, otherwise computed
/// and stored. Returns whether the cache was hit.
pub fn cell_results_cached(cfg: &RunConfig, cache_dir: &Path) -> Result<(CellResults, bool)> {
    let path = cache_dir.join(format!("{}.toml", cell_hash(cfg)?));
    if path.is_file() {
        if let Ok(r) = io::read_toml::<CellResults>(&path) {
            return Ok((r, true));
        }
    }
    let r = compute_cell_results(cfg)?;
    io::write_toml(&path, &r)?;
    Ok((r, false))
}

pub fn macro_domain(cfg: &RunConfig) -> Result<MacroDomain> {
    let dom = MacroDomain::new(&cfg.domain.extent, cfg.domain.depth, &cfg.grid.macro_cells)?;
    match (cfg.case, cfg.domain.delta) {
        (FlowCase::Case2Intermediate, Some(delta)) => dom.with_slab(delta, cfg.grid.slab_layers),
        (FlowCase::Case2Intermediate, None) => Err(Error::Validation(vec!["domain.delta: required for case 2i".into()])),
        _ => Ok(dom),
    }
}

pub fn flow_problem(cfg: &RunConfig, cells: &CellResults) -> MacroFlowProblem {
    let ext = &cfg.domain.extent;
    MacroFlowProblem::new(
        cfg.case,
        cells.k_artery.matrix() / cfg.physics.viscosity,
        cells.k_vein.matrix() / cfg.physics.viscosity,
        cells.k_skin.matrix() / cfg.physics.viscosity,
        cfg.physics.p_artery.field(ext),
        cfg.physics.p_vein.field(ext),
    )
    .with_solver(cfg.solver.options())
}

pub fn run_flow(cfg: &RunConfig, cells: &CellResults) -> Result<MacroFlowSolution> {
    let dom = macro_domain(cfg)?;
    let prob = flow_problem(cfg, cells);
    let sol = solve_flow(&dom, &prob).map_err(|e| e.context("macro flow"))?;
    Ok(compute_velocities(sol, &prob))
}

fn decay(spec: &DecaySpec) -> PhaseAverages {
    match spec {
        DecaySpec::Constant(d) => PhaseAverages::constant(*d),
        DecaySpec::Samples { times, values } => PhaseAverages {
            times: times.clone(),
            means: values.clone(),
        },
    }
}

fn steady(f: Field) -> TimeField {
    match f {
        Field::Constant(c) => TimeField::Constant(c),
        Field::Function(g) => TimeField::function(move |x, _| g(x)),
    }
}

pub fn oxygen_problem(cfg: &RunConfig, cells: &CellResults, flow: &MacroFlowSolution) -> OxygenProblem {
    let p = &cfg.physics;
    let ext = &cfg.domain.extent;
    let coefficients = OxygenCoefficients {
        theta: cells.theta,
        gamma: cells.gamma,
        lambda: p.lambda,
        a_artery: cells.a_artery.matrix(),
        a_vein: cells.a_vein.matrix(),
        a_tissue: cells.a_tissue.matrix(),
        skin: SkinCoefficients {
            theta_blood: cells.skin_theta[0],
            theta_tissue: cells.skin_theta[1],
            a_blood: cells.a_skin_blood.matrix(),
            a_tissue: cells.a_skin_tissue.matrix(),
            exchange: p.lambda[0] * cells.skin_gamma[0] + p.lambda[1] * cells.skin_gamma[1],
        },
        decay_bulk: decay(&p.decay),
        decay_skin: decay(&p.decay),
    };
    OxygenProblem {
        domain: flow.domain.clone(),
        case: cfg.case,
        coefficients,
        fluxes: TransportFluxes::from_flow(flow),
        dirichlet_artery: steady(p.c_artery.field(ext)),
        dirichlet_vein: steady(p.c_vein.field(ext)),
        dirichlet_bottom: true,
        initial: InitialData::uniform(p.c_initial),
        sources: OxygenSources::default(),
    }
}

pub fn stepper(cfg: &RunConfig, prob: &OxygenProblem) -> StepperConfig {
    let dt = cfg.time.dt.unwrap_or_else(|| default_time_step(prob));
    let mut s = StepperConfig::new(dt, cfg.time.final_time);
    s.solver = cfg.solver.options();
    s.output_every = cfg.time.output_every;
    s.advection = cfg.time.advection;
    s
}

pub struct OxygenRun {
    pub problem: OxygenProblem,
    pub stepper: StepperConfig,
    pub states: Vec<OxygenState>,
    pub mass: Vec<f64>,
}

pub fn run_oxygen(cfg: &RunConfig, cells: &CellResults, flow: &MacroFlowSolution) -> Result<OxygenRun> {
    let problem = oxygen_problem(cfg, cells, flow);
    let stepper = stepper(cfg, &problem);
    let states = run_transient(&problem, &stepper).map_err(|e| e.context("oxygen transport"))?;
    let mass = states.iter().map(|s| problem.total_mass(s)).collect::<Result<Vec<_>>>()?;
    Ok(OxygenRun {
        problem,
        stepper,
        states,
        mass,
    })
}

pub fn write_tensors(dir: &Path, cells: &CellResults) -> Result<()> {
    for (name, t) in cells.tensors() {
        io::write_matrix_csv(&dir.join(format!("{name}.csv")), &t.matrix())?;
    }
    Ok(())
}

fn velocity_table(v: &[[f64; 3]], dim: usize) -> Table {
    let mut t = Table::new(["vx", "vy", "vz"].into_iter().take(dim));
    for e in v {
        t.push(e[..dim].to_vec());
    }
    t
}

pub fn write_flow(dir: &Path, sol: &MacroFlowSolution) -> Result<()> {
    let dom = &sol.domain;
    let bulk = VtkField::on_grid("macro flow bulk", &dom.bulk_grid())
        .with("p_artery", sol.p_artery.clone())
        .with("p_vein", sol.p_vein.clone());
    io::write_vtk(&dir.join("flow_bulk.vtk"), &bulk)?;
    let surf = VtkField::on_grid("macro flow surface", &dom.surface_grid())
        .with("p_skin", sol.p_skin.clone())
        .with("interface_flux_artery", sol.interface_flux_artery.clone())
        .with("interface_flux_vein", sol.interface_flux_vein.clone())
        .with("dirichlet_flux_artery", sol.dirichlet_flux_artery.clone())
        .with("dirichlet_flux_vein", sol.dirichlet_flux_vein.clone());
    io::write_vtk(&dir.join("flow_surface.vtk"), &surf)?;
    if let (Some(p), Some(g)) = (&sol.p_slab, dom.slab_grid()) {
        io::write_vtk(&dir.join("flow_slab.vtk"), &VtkField::on_grid("macro flow slab", &g).with("p_skin", p.clone()))?;
    }
    if let Some(v) = &sol.velocities {
        let dim = dom.dim();
        io::write_table_csv(&dir.join("velocity_artery.csv"), &velocity_table(&v.artery, dim))?;
        io::write_table_csv(&dir.join("velocity_vein.csv"), &velocity_table(&v.vein, dim))?;
        io::write_table_csv(&dir.join("velocity_skin.csv"), &velocity_table(&v.skin, dim))?;
    }
    Ok(())
}

pub fn write_oxygen(dir: &Path, run: &OxygenRun) -> Result<()> {
    let dom = &run.problem.domain;
    let last = run.states.last().expect("at least the initial state");
    let bulk = VtkField::on_grid("oxygen bulk", &dom.bulk_grid())
        .with("artery", last.artery.clone())
        .with("vein", last.vein.clone())
        .with("tissue", last.tissue.clone());
    io::write_vtk(&dir.join("oxygen_bulk.vtk"), &bulk)?;
    let skin = VtkField::on_grid("oxygen skin", &skin_grid(dom, run.problem.case)?)
        .with("skin_blood", last.skin_blood.clone())
        .with("skin_tissue", last.skin_tissue.clone());
    io::write_vtk(&dir.join("oxygen_skin.vtk"), &skin)?;
    let mut t = Table::new(["time", "min", "max", "mass"]);
    for (s, m) in run.states.iter().zip(&run.mass) {
        t.push(vec![s.time, s.min(), s.max(), *m]);
    }
    io::write_table_csv(&dir.join("oxygen_history.csv"), &t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub iterations: usize,
    pub residual: f64,
    pub interface_imbalance: f64,
    pub dirichlet_imbalance: f64,
    pub flux_scale: f64,
    pub max_divergence: f64,
    pub compatible: bool,
}

impl FlowReport {
    pub fn new(sol: &MacroFlowSolution, tol: f64) -> Self {
        let d = &sol.diagnostics;
        Self {
            iterations: sol.iterations,
            residual: sol.residual,
            interface_imbalance: d.interface_imbalance,
            dirichlet_imbalance: d.dirichlet_imbalance,
            flux_scale: d.flux_scale,
            max_divergence: d.max_divergence,
            compatible: d.compatible(tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OxygenReport {
    pub dt: f64,
    pub final_time: f64,
    pub outputs: usize,
    pub min: f64,
    pub max: f64,
    pub mass_initial: f64,
    pub mass_final: f64,
}

impl OxygenReport {
    pub fn new(run: &OxygenRun) -> Self {
        let last = run.states.last().expect("at least the initial state");
        Self {
            dt: run.stepper.dt,
            final_time: last.time,
            outputs: run.states.len(),
            min: run.states.iter().map(OxygenState::min).fold(f64::INFINITY, f64::min),
            max: run.states.iter().map(OxygenState::max).fold(f64::NEG_INFINITY, f64::max),
            mass_initial: run.mass[0],
            mass_final: *run.mass.last().unwrap(),
        }
    }
}

/// Deterministic summary of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub toolkit_version: String,
    pub config_hash: String,
    pub case: FlowCase,
    pub cells: CellResults,
    pub flow: FlowReport,
    pub oxygen: OxygenReport,
}

/// Run metadata that varies between reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub toolkit_version: String,
    pub config_hash: String,
    pub cell_hash: String,
    pub cell_grid: usize,
    pub macro_grid: Vec<usize>,
    pub tolerance: f64,
    pub cache_hit: bool,
    pub residuals: BTreeMap<String, f64>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub out_dir: PathBuf,
    pub report: Report,
    pub provenance: ProvenanceRecord,
}

/// Runs the whole chain and writes every artifact under `out_dir`.
pub fn run_pipeline(cfg: &RunConfig, out_dir: &Path) -> Result<PipelineOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    let config_hash = config_hash(cfg)?;
    let (cells, cache_hit) = cell_results_cached(cfg, &out_dir.join("cache")).map_err(|e| e.context("cell problems"))?;
    write_tensors(&out_dir.join("tensors"), &cells)?;
    let flow = run_flow(cfg, &cells)?;
    let fields = out_dir.join("fields");
    write_flow(&fields, &flow)?;
    let oxygen = run_oxygen(cfg, &cells, &flow)?;
    write_oxygen(&fields, &oxygen)?;
    let report = Report {
        toolkit_version: VERSION.into(),
        config_hash: config_hash.clone(),
        case: cfg.case,
        flow: FlowReport::new(&flow, 1e-6),
        oxygen: OxygenReport::new(&oxygen),
        cells,
    };
    io::write_toml(&out_dir.join("report.toml"), &report)?;
    let mut residuals = report.cells.residuals.clone();
    residuals.insert("flow".into(), flow.residual);
    let provenance = ProvenanceRecord {
        toolkit_version: VERSION.into(),
        config_hash,
        cell_hash: cell_hash(cfg)?,
        cell_grid: cfg.grid.cell,
        macro_grid: cfg.grid.macro_cells.clone(),
        tolerance: cfg.solver.tolerance,
        cache_hit,
        residuals,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    io::write_toml(&out_dir.join("provenance.toml"), &provenance)?;
    Ok(PipelineOutcome {
        out_dir: out_dir.to_path_buf(),
        report,
        provenance,
    })
}

/// Sweep settings from the `[dns]` section.
pub fn sweep_config(cfg: &RunConfig) -> Result<SweepConfig> {
    let d = &cfg.dns;
    let mut stepper = MicroStepper::new(d.dt, d.final_time);
    stepper.output_every = d.output_every;
    stepper.solver = cfg.solver.options();
    Ok(SweepConfig {
        cell: d.cell_spec(cfg)?,
        ns: d.ns.clone(),
        voxels_per_cell: d.voxels_per_cell,
        diffusion: d.diffusion,
        lambda: d.lambda,
        decay: d.decay,
        mode: CosineMode {
            mean: d.mean,
            amp: d.amplitude,
            k: [2.0 * std::f64::consts::PI; 2],
        },
        stepper,
        control_scale: d.control_scale,
        rate_threshold: d.rate_threshold,
    })
}

/// One row per resolution; the rate column holds the rate from the
/// previous row (NaN on the first).
pub fn sweep_table(report: &SweepReport) -> Table {
    let mut t = Table::new(["n", "eps", "l2", "linf", "l2_control", "rate"]);
    for (i, r) in report.rows.iter().enumerate() {
        let rate = if i == 0 { f64::NAN } else { report.rates[i - 1] };
        t.push(vec![r.n as f64, r.eps, r.l2, r.linf, r.l2_control, rate]);
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepVerdict {
    pub pass: bool,
    pub monotone: bool,
    pub control_decreasing: bool,
    pub rate_threshold: f64,
    pub rates: Vec<f64>,
}

/// Runs the sweep and writes `dns_sweep.csv` and `dns_verdict.toml`.
pub fn run_dns_validation(cfg: &RunConfig, out_dir: &Path) -> Result<SweepReport> {
    let sweep = sweep_config(cfg)?;
    let report = epsilon_sweep(&sweep).map_err(|e| e.context("epsilon sweep"))?;
    io::write_table_csv(&out_dir.join("dns_sweep.csv"), &sweep_table(&report))?;
    let verdict = SweepVerdict {
        pass: report.pass,
        monotone: report.monotone,
        control_decreasing: report.control_decreasing,
        rate_threshold: sweep.rate_threshold,
        rates: report.rates.clone(),
    };
    io::write_toml(&out_dir.join("dns_verdict.toml"), &verdict)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(Tensor::from(&m).matrix(), m);
    }

    #[test]
    fn hashes_ignore_output_dir_only() {
        let mut a = RunConfig::new(FlowCase::Case1);
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.physics.lambda[0] = 2.0;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        // the cell inputs do not include lambda
        assert_eq!(cell_hash(&a).unwrap(), cell_hash(&b).unwrap());
        a.grid.cell = 16;
        assert_ne!(cell_hash(&a).unwrap(), cell_hash(&b).unwrap());
    }
}
