//! Python bindings.
//!
//! Tensors come back as nested lists (row-major), nodal fields as flat
//! lists ordered with `x` fastest.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyIOError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use tissue_homog::config as cfg;
use tissue_homog::diffusion::effective_diffusion as solve_diffusion;
use tissue_homog::geometry::{measure_cell, presets as cell_presets, PhaseSelector};
use tissue_homog::macro_flow::{FlowCase, MacroFlowSolution};
use tissue_homog::pipeline;
use tissue_homog::stokes::permeability as solve_permeability;
use tissue_homog::{Error, ErrorCategory};

create_exception!(tissue_homog, HomogError, PyException);
create_exception!(tissue_homog, ConfigError, HomogError);
create_exception!(tissue_homog, SolverError, HomogError);
create_exception!(tissue_homog, GeometryError, HomogError);

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.category() {
        ErrorCategory::Config => ConfigError::new_err(msg),
        ErrorCategory::Solver => SolverError::new_err(msg),
        ErrorCategory::Geometry => GeometryError::new_err(msg),
        ErrorCategory::Io => PyIOError::new_err(msg),
    }
}

fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn selector(name: &str) -> PyResult<PhaseSelector> {
    Ok(match name {
        "artery" => PhaseSelector::Artery,
        "vein" => PhaseSelector::Vein,
        "tissue" => PhaseSelector::Tissue,
        "blood" => PhaseSelector::Blood,
        "all" => PhaseSelector::All,
        other => return Err(ConfigError::new_err(format!("unknown phase `{other}`"))),
    })
}

/// Validated run configuration.
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: cfg::RunConfig,
}

#[pymethods]
impl PyRunConfig {
    /// Defaults for the given case ("1", "2i" or "2l").
    #[new]
    #[pyo3(signature = (case = "1"))]
    fn new(case: &str) -> PyResult<Self> {
        let case = FlowCase::parse(case).map_err(to_py)?;
        Ok(Self {
            inner: cfg::RunConfig::new(case),
        })
    }

    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        cfg::parse_config(text).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        cfg::load_config(&path).map(|inner| Self { inner }).map_err(to_py)
    }

    #[getter]
    fn case(&self) -> &'static str {
        self.inner.case.name()
    }

    #[getter]
    fn cell_grid(&self) -> usize {
        self.inner.grid.cell
    }

    #[setter]
    fn set_cell_grid(&mut self, n: usize) {
        self.inner.grid.cell = n;
    }

    #[getter]
    fn macro_grid(&self) -> Vec<usize> {
        self.inner.grid.macro_cells.clone()
    }

    #[setter]
    fn set_macro_grid(&mut self, n: Vec<usize>) {
        self.inner.grid.macro_cells = n;
    }

    #[getter]
    fn tolerance(&self) -> f64 {
        self.inner.solver.tolerance
    }

    #[setter]
    fn set_tolerance(&mut self, tol: f64) {
        self.inner.solver.tolerance = tol;
    }

    #[getter]
    fn final_time(&self) -> f64 {
        self.inner.time.final_time
    }

    #[setter]
    fn set_final_time(&mut self, t: f64) {
        self.inner.time.final_time = t;
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn config_hash(&self) -> PyResult<String> {
        pipeline::config_hash(&self.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("RunConfig(case={:?})", self.inner.case.name())
    }
}

/// Effective tensors and cell measures.
#[pyclass(name = "CellResults", skip_from_py_object)]
struct PyCellResults {
    inner: pipeline::CellResults,
}

#[pymethods]
impl PyCellResults {
    /// One of k_artery, k_vein, k_skin, a_artery, a_vein, a_tissue,
    /// a_skin_blood, a_skin_tissue.
    fn tensor(&self, name: &str) -> PyResult<Vec<Vec<f64>>> {
        self.inner
            .tensors()
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.rows.clone())
            .ok_or_else(|| ConfigError::new_err(format!("unknown tensor `{name}`")))
    }

    fn names(&self) -> Vec<&'static str> {
        self.inner.tensors().iter().map(|(n, _)| *n).collect()
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta.to_vec()
    }

    #[getter]
    fn gamma(&self) -> Vec<f64> {
        self.inner.gamma.to_vec()
    }

    #[getter]
    fn skin_theta(&self) -> Vec<f64> {
        self.inner.skin_theta.to_vec()
    }
}

/// Pressures and diagnostics of a macro flow solve.
#[pyclass(name = "FlowSolution", skip_from_py_object)]
struct PyFlowSolution {
    inner: MacroFlowSolution,
}

#[pymethods]
impl PyFlowSolution {
    #[getter]
    fn case(&self) -> &'static str {
        self.inner.case.name()
    }

    /// Nodes per axis of the bulk grid.
    #[getter]
    fn shape(&self) -> Vec<usize> {
        let g = self.inner.domain.bulk_grid();
        g.nodes_per_axis()[..g.dim()].to_vec()
    }

    #[getter]
    fn p_artery(&self) -> Vec<f64> {
        self.inner.p_artery.clone()
    }

    #[getter]
    fn p_vein(&self) -> Vec<f64> {
        self.inner.p_vein.clone()
    }

    #[getter]
    fn p_skin(&self) -> Vec<f64> {
        self.inner.p_skin.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = &self.inner.diagnostics;
        let out = PyDict::new(py);
        out.set_item("interface_imbalance", d.interface_imbalance)?;
        out.set_item("dirichlet_imbalance", d.dirichlet_imbalance)?;
        out.set_item("flux_scale", d.flux_scale)?;
        out.set_item("max_divergence", d.max_divergence)?;
        Ok(out)
    }
}

#[pyfunction]
fn presets() -> Vec<&'static str> {
    cell_presets::names()
}

/// Volume fractions and wall measures of a preset cell.
#[pyfunction]
#[pyo3(signature = (preset, n = 32))]
fn cell_measures<'py>(py: Python<'py>, preset: &str, n: usize) -> PyResult<Bound<'py, PyDict>> {
    let spec = cell_presets::cell(preset).map_err(to_py)?;
    let mask = pipeline::cell_mask(&spec, n).map_err(to_py)?;
    let m = measure_cell(&mask);
    let out = PyDict::new(py);
    out.set_item("theta", m.theta.to_vec())?;
    out.set_item("surface", m.surface.to_vec())?;
    out.set_item("staircase", m.staircase.to_vec())?;
    out.set_item("sigma", m.sigma)?;
    Ok(out)
}

/// Effective permeability of one blood phase of a preset cell.
#[pyfunction]
#[pyo3(signature = (preset, n = 32, phase = "artery", viscosity = 1.0, tol = 1e-8))]
fn permeability(py: Python<'_>, preset: &str, n: usize, phase: &str, viscosity: f64, tol: f64) -> PyResult<Vec<Vec<f64>>> {
    let sel = selector(phase)?;
    let spec = cell_presets::cell(preset).map_err(to_py)?;
    py.detach(|| {
        let mask = pipeline::cell_mask(&spec, n)?;
        let (k, _) = solve_permeability(&mask, sel, viscosity, tissue_homog::linalg::SolverOptions::with_tolerance(tol))?;
        Ok(rows(&k.k))
    })
    .map_err(to_py)
}

/// Effective diffusion tensor of one phase with per-phase diffusivities
/// (artery, vein, tissue).
#[pyfunction]
#[pyo3(signature = (preset, n = 32, phase = "tissue", diffusion = (1.0, 1.0, 1.0), tol = 1e-8))]
fn effective_diffusion(
    py: Python<'_>,
    preset: &str,
    n: usize,
    phase: &str,
    diffusion: (f64, f64, f64),
    tol: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let sel = selector(phase)?;
    let spec = cell_presets::cell(preset).map_err(to_py)?;
    py.detach(|| {
        let mask = pipeline::cell_mask(&spec, n)?;
        let coef = pipeline::phase_coefficient(&mask, [diffusion.0, diffusion.1, diffusion.2]);
        let (a, _) = solve_diffusion(&mask, sel, &coef, tissue_homog::linalg::SolverOptions::with_tolerance(tol))?;
        Ok(rows(&a.a))
    })
    .map_err(to_py)
}

/// Every cell problem the macro models need.
#[pyfunction]
fn compute_cells(py: Python<'_>, config: &PyRunConfig) -> PyResult<PyCellResults> {
    let c = config.inner.clone();
    py.detach(|| pipeline::compute_cell_results(&c))
        .map(|inner| PyCellResults { inner })
        .map_err(to_py)
}

#[pyfunction]
fn solve_flow(py: Python<'_>, config: &PyRunConfig, cells: &PyCellResults) -> PyResult<PyFlowSolution> {
    let c = config.inner.clone();
    let r = cells.inner.clone();
    py.detach(|| pipeline::run_flow(&c, &r))
        .map(|inner| PyFlowSolution { inner })
        .map_err(to_py)
}

/// Oxygen transport on a flow solution. Returns output times, ranges and
/// total mass, plus the final fields.
#[pyfunction]
fn run_oxygen<'py>(
    py: Python<'py>,
    config: &PyRunConfig,
    cells: &PyCellResults,
    flow: &PyFlowSolution,
) -> PyResult<Bound<'py, PyDict>> {
    let c = config.inner.clone();
    let r = cells.inner.clone();
    let f = flow.inner.clone();
    let run = py.detach(|| pipeline::run_oxygen(&c, &r, &f)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("dt", run.stepper.dt)?;
    out.set_item("times", run.states.iter().map(|s| s.time).collect::<Vec<_>>())?;
    out.set_item("min", run.states.iter().map(|s| s.min()).collect::<Vec<_>>())?;
    out.set_item("max", run.states.iter().map(|s| s.max()).collect::<Vec<_>>())?;
    out.set_item("mass", run.mass.clone())?;
    let last = run.states.last().expect("at least the initial state");
    for (name, v) in tissue_homog::macro_oxygen::OxygenState::FIELD_NAMES.iter().zip(last.fields()) {
        out.set_item(*name, v.clone())?;
    }
    Ok(out)
}

/// Full pipeline; returns the output directory, config hash and whether
/// the cell cache was used.
#[pyfunction]
fn run_pipeline<'py>(py: Python<'py>, config: &PyRunConfig, out_dir: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let c = config.inner.clone();
    let o = py.detach(|| pipeline::run_pipeline(&c, &out_dir)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("out_dir", o.out_dir)?;
    out.set_item("config_hash", o.provenance.config_hash)?;
    out.set_item("cache_hit", o.provenance.cache_hit)?;
    out.set_item("flow_compatible", o.report.flow.compatible)?;
    out.set_item("oxygen_min", o.report.oxygen.min)?;
    out.set_item("oxygen_max", o.report.oxygen.max)?;
    Ok(out)
}

/// Micro-scale epsilon sweep from the `[dns]` section.
#[pyfunction]
fn epsilon_sweep<'py>(py: Python<'py>, config: &PyRunConfig) -> PyResult<Bound<'py, PyDict>> {
    let c = config.inner.clone();
    let r = py
        .detach(|| pipeline::sweep_config(&c).and_then(|s| tissue_homog::dns::epsilon_sweep(&s)))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("n", r.rows.iter().map(|x| x.n).collect::<Vec<_>>())?;
    out.set_item("l2", r.rows.iter().map(|x| x.l2).collect::<Vec<_>>())?;
    out.set_item("linf", r.rows.iter().map(|x| x.linf).collect::<Vec<_>>())?;
    out.set_item("l2_control", r.rows.iter().map(|x| x.l2_control).collect::<Vec<_>>())?;
    out.set_item("rates", r.rates)?;
    out.set_item("pass", r.pass)?;
    Ok(out)
}

#[pymodule]
#[pyo3(name = "tissue_homog")]
fn tissue_homog_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("__version__", pipeline::VERSION)?;
    m.add("HomogError", py.get_type::<HomogError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("SolverError", py.get_type::<SolverError>())?;
    m.add("GeometryError", py.get_type::<GeometryError>())?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyCellResults>()?;
    m.add_class::<PyFlowSolution>()?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(cell_measures, m)?)?;
    m.add_function(wrap_pyfunction!(permeability, m)?)?;
    m.add_function(wrap_pyfunction!(effective_diffusion, m)?)?;
    m.add_function(wrap_pyfunction!(compute_cells, m)?)?;
    m.add_function(wrap_pyfunction!(solve_flow, m)?)?;
    m.add_function(wrap_pyfunction!(run_oxygen, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_sweep, m)?)?;
    Ok(())
}
