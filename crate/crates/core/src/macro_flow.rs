//! Homogenized Darcy flow in the fat layer coupled to the skin layer.
//!
//! The bulk box is `[0, X] x (-L, 0)` (last axis vertical). Pressures are
//! fixed on the bottom face, the lateral faces are impermeable and the top
//! face carries the skin model: a surface Darcy equation (Case 1 and the
//! Case 2 limit) or a thin slab of height `delta` (Case 2 intermediate).
//! The normal on the top face points out of the bulk, into the skin.
//!
//! Artery, vein and skin pressures share one unknown per top-face node, so
//! the trace conditions hold exactly and the coupled system is symmetric
//! positive definite.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, ScalarFn};
use crate::fvgrid::{EdgeField, NodeGrid};
use crate::linalg::{cg, Jacobi, SolverOptions, TripletBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowCase {
    #[serde(rename = "1")]
    Case1,
    #[serde(rename = "2i")]
    Case2Intermediate,
    #[serde(rename = "2l")]
    Case2Limit,
}

impl FlowCase {
    pub fn name(self) -> &'static str {
        match self {
            FlowCase::Case1 => "1",
            FlowCase::Case2Intermediate => "2i",
            FlowCase::Case2Limit => "2l",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(FlowCase::Case1),
            "2i" => Ok(FlowCase::Case2Intermediate),
            "2l" => Ok(FlowCase::Case2Limit),
            other => Err(Error::InvalidArgument(format!(
                "unknown case `{other}`; expected 1, 2i or 2l"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlabSpec {
    pub delta: f64,
    pub layers: usize,
}

/// Structured macroscopic domain.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroDomain {
    extent: Vec<f64>,
    depth: f64,
    cells: Vec<usize>,
    slab: Option<SlabSpec>,
}

/// Minimum number of element layers across the slab.
pub const MIN_SLAB_LAYERS: usize = 8;

impl MacroDomain {
    /// `extent` holds the horizontal sizes, `cells` the element counts for
    /// all axes with the vertical one last.
    pub fn new(extent: &[f64], depth: f64, cells: &[usize]) -> Result<Self> {
        let dim = cells.len();
        if !(2..=3).contains(&dim) || extent.len() + 1 != dim {
            return Err(Error::InvalidArgument(format!(
                "macro domain needs 2 or 3 axes with one horizontal extent per horizontal axis, got {} extents and {} cell counts",
                extent.len(),
                dim
            )));
        }
        if !(depth > 0.0 && depth.is_finite()) || extent.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidArgument("domain sizes must be positive".into()));
        }
        if cells.iter().any(|&c| c < 1) {
            return Err(Error::InvalidArgument("every axis needs at least one cell".into()));
        }
        Ok(Self {
            extent: extent.to_vec(),
            depth,
            cells: cells.to_vec(),
            slab: None,
        })
    }

    /// Adds the skin slab `(0, delta)` with at least [`MIN_SLAB_LAYERS`] layers.
    pub fn with_slab(mut self, delta: f64, layers: usize) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("slab thickness must be positive, got {delta}")));
        }
        self.slab = Some(SlabSpec {
            delta,
            layers: layers.max(MIN_SLAB_LAYERS),
        });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn slab(&self) -> Option<SlabSpec> {
        self.slab
    }

    pub fn bulk_grid(&self) -> NodeGrid {
        let d = self.dim();
        let mut origin = vec![0.0; d];
        origin[d - 1] = -self.depth;
        let mut ext = self.extent.clone();
        ext.push(self.depth);
        NodeGrid::new(&origin, &ext, &self.cells)
    }

    pub fn surface_grid(&self) -> NodeGrid {
        self.bulk_grid().trace()
    }

    pub fn slab_grid(&self) -> Option<NodeGrid> {
        let s = self.slab?;
        let d = self.dim();
        let origin = vec![0.0; d];
        let mut ext = self.extent.clone();
        ext.push(s.delta);
        let mut cells = self.cells[..d - 1].to_vec();
        cells.push(s.layers);
        Some(NodeGrid::new(&origin, &ext, &cells))
    }

    /// Bulk node index of the top-face node above surface node `s`.
    pub fn top_node(&self, s: usize) -> usize {
        let bulk = self.bulk_grid();
        let surf = self.surface_grid();
        let mut c = surf.node_coords(s);
        c[self.dim() - 1] = self.cells[self.dim() - 1];
        bulk.node_index(c)
    }

    /// Bulk node index of the bottom-face node below surface node `s`.
    pub fn bottom_node(&self, s: usize) -> usize {
        let bulk = self.bulk_grid();
        let mut c = self.surface_grid().node_coords(s);
        c[self.dim() - 1] = 0;
        bulk.node_index(c)
    }
}

/// Optional volume sources, used for manufactured solutions.
#[derive(Clone, Default)]
pub struct FlowSources {
    pub artery: Option<ScalarFn>,
    pub vein: Option<ScalarFn>,
    pub surface: Option<ScalarFn>,
}

impl std::fmt::Debug for FlowSources {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlowSources")
            .field("artery", &self.artery.is_some())
            .field("vein", &self.vein.is_some())
            .field("surface", &self.surface.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct MacroFlowProblem {
    pub case: FlowCase,
    pub k_artery: DMatrix<f64>,
    pub k_vein: DMatrix<f64>,
    /// Skin permeability. Case 1 and the Case 2 limit use the horizontal
    /// block; the slab model needs the full tensor.
    pub k_skin: DMatrix<f64>,
    pub p_artery: Field,
    pub p_vein: Field,
    pub sources: FlowSources,
    pub solver: SolverOptions,
}

impl MacroFlowProblem {
    pub fn new(
        case: FlowCase,
        k_artery: DMatrix<f64>,
        k_vein: DMatrix<f64>,
        k_skin: DMatrix<f64>,
        p_artery: impl Into<Field>,
        p_vein: impl Into<Field>,
    ) -> Self {
        Self {
            case,
            k_artery,
            k_vein,
            k_skin,
            p_artery: p_artery.into(),
            p_vein: p_vein.into(),
            sources: FlowSources::default(),
            solver: SolverOptions::default(),
        }
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_sources(mut self, sources: FlowSources) -> Self {
        self.sources = sources;
        self
    }
}

/// Checks symmetry and positive semidefiniteness. With `normal`, the entry
/// on that axis must also be positive so every column reaches the
/// Dirichlet face.
pub(crate) fn check_tensor(name: &str, k: &DMatrix<f64>, dim: usize, normal: Option<usize>) -> Result<()> {
    if k.shape() != (dim, dim) {
        return Err(Error::ShapeMismatch(format!(
            "{name} must be {dim}x{dim}, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem(format!("{name} has non-finite entries")));
    }
    let scale = k.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let asym = (k - k.transpose()).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if asym > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::SingularSystem(format!("{name} is not symmetric")));
    }
    let sym = (k + k.transpose()) * 0.5;
    let min_eig = sym.symmetric_eigenvalues().min();
    if min_eig < -1e-10 * scale {
        return Err(Error::SingularSystem(format!(
            "{name} is not positive semidefinite (smallest eigenvalue {min_eig:e})"
        )));
    }
    if let Some(a) = normal {
        if !(k[(a, a)] > 1e-14 * scale.max(1e-300)) || scale == 0.0 {
            return Err(Error::SingularSystem(format!(
                "{name} has no conductivity along the vertical axis"
            )));
        }
    }
    Ok(())
}

fn horizontal_block(k: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    k.view((0, 0), (dim - 1, dim - 1)).into_owned()
}

/// Pressures, fluxes and balance diagnostics of a flow solve.
#[derive(Debug, Clone)]
pub struct MacroFlowSolution {
    pub case: FlowCase,
    pub domain: MacroDomain,
    /// Nodal pressures on the bulk grid, Dirichlet values included.
    pub p_artery: Vec<f64>,
    pub p_vein: Vec<f64>,
    /// Skin pressure on the surface grid (for the slab model, its bottom trace).
    pub p_skin: Vec<f64>,
    /// Slab pressure on the slab grid (Case 2 intermediate only).
    pub p_slab: Option<Vec<f64>>,
    /// Volume fluxes through dual faces on the bulk grid edges.
    pub flux_artery: EdgeField,
    pub flux_vein: EdgeField,
    /// Skin fluxes as they enter the coupled balance: `2 K grad p` for
    /// Case 1, `K grad p` for the Case 2 limit on the surface grid, and the
    /// slab flux scaled by `1/delta` on the slab grid.
    pub flux_skin: EdgeField,
    /// Outward flux through the top face per surface node.
    pub interface_flux_artery: Vec<f64>,
    pub interface_flux_vein: Vec<f64>,
    /// Outward flux through the bottom face per surface node.
    pub dirichlet_flux_artery: Vec<f64>,
    pub dirichlet_flux_vein: Vec<f64>,
    /// Element velocities, filled by [`compute_velocities`].
    pub velocities: Option<FlowVelocities>,
    pub iterations: usize,
    pub residual: f64,
    pub diagnostics: FlowDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowDiagnostics {
    /// `|sum over the top face of (v_a + v_v) . n|`
    pub interface_imbalance: f64,
    /// `|sum over the bottom face of (v_a + v_v) . n|`
    pub dirichlet_imbalance: f64,
    /// Sum of absolute normal fluxes through the top and bottom faces.
    pub flux_scale: f64,
    /// Largest net flux out of a control volume, sources removed.
    pub max_divergence: f64,
}

impl FlowDiagnostics {
    pub fn compatible(&self, tol: f64) -> bool {
        let s = tol * self.flux_scale + 1e-14;
        self.interface_imbalance <= s && self.dirichlet_imbalance <= s
    }
}

/// Element-centered Darcy velocities `-K grad p`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowVelocities {
    pub artery: Vec<[f64; 3]>,
    pub vein: Vec<[f64; 3]>,
    /// On the surface grid (Case 1 / limit) or the slab grid.
    pub skin: Vec<[f64; 3]>,
}

struct Assembler {
    rows: usize,
    triplets: TripletBuilder,
    rhs: Vec<f64>,
}

impl Assembler {
    /// Adds `weight * K` stiffness of `grid`; `map` sends grid nodes to
    /// unknowns, `usize::MAX` marking Dirichlet nodes with values `fixed`.
    fn block(&mut self, grid: &NodeGrid, k: &DMatrix<f64>, weight: f64, map: &[usize], fixed: &[f64]) {
        let kw = k * weight;
        let rhs = &mut self.rhs;
        let t = &mut self.triplets;
        grid.stiffness(&kw, |i, j, v| {
            let r = map[i];
            if r == usize::MAX {
                return;
            }
            let c = map[j];
            if c == usize::MAX {
                rhs[r] -= v * fixed[j];
            } else {
                t.push(r, c, v);
            }
        });
    }

    fn source(&mut self, grid: &NodeGrid, f: &ScalarFn, weight: f64, map: &[usize]) {
        for (i, &r) in map.iter().enumerate() {
            if r != usize::MAX {
                self.rhs[r] += weight * grid.integrate_dual(i, &|x| f(x));
            }
        }
    }
}

/// Unknown numbering shared by the flow and oxygen assemblies.
#[derive(Debug, Clone)]
pub(crate) struct CoupledIndex {
    pub artery: Vec<usize>,
    pub vein: Vec<usize>,
    pub surface: Vec<usize>,
    pub slab: Option<Vec<usize>>,
    pub count: usize,
}

impl CoupledIndex {
    /// `fixed_bottom` removes the bottom layer from the artery and vein
    /// unknowns; `share_vein` lets the vein use the artery top unknowns.
    pub fn build(dom: &MacroDomain, fixed_bottom: bool, with_slab: bool) -> Self {
        let bulk = dom.bulk_grid();
        let surf = dom.surface_grid();
        let v = dom.dim() - 1;
        let nz = dom.cells()[v];
        let mut count = 0;
        let mut artery = vec![usize::MAX; bulk.node_count()];
        for (i, m) in artery.iter_mut().enumerate() {
            if !(fixed_bottom && bulk.node_coords(i)[v] == 0) {
                *m = count;
                count += 1;
            }
        }
        let mut vein = vec![usize::MAX; bulk.node_count()];
        for i in 0..bulk.node_count() {
            let k = bulk.node_coords(i)[v];
            if k == nz {
                vein[i] = artery[i];
            } else if !(fixed_bottom && k == 0) {
                vein[i] = count;
                count += 1;
            }
        }
        let surface: Vec<usize> = (0..surf.node_count()).map(|s| artery[dom.top_node(s)]).collect();
        let slab = if with_slab {
            dom.slab_grid().map(|g| {
                (0..g.node_count())
                    .map(|i| {
                        let c = g.node_coords(i);
                        if c[v] == 0 {
                            let mut cb = c;
                            cb[v] = nz;
                            artery[bulk.node_index(cb)]
                        } else {
                            let r = count;
                            count += 1;
                            r
                        }
                    })
                    .collect()
            })
        } else {
            None
        };
        Self {
            artery,
            vein,
            surface,
            slab,
            count,
        }
    }
}

/// Pressures recovered on every grid from the unknown vector.
fn scatter(map: &[usize], x: &[f64], fixed: &[f64]) -> Vec<f64> {
    map.iter()
        .enumerate()
        .map(|(i, &r)| if r == usize::MAX { fixed[i] } else { x[r] })
        .collect()
}

fn solve(dom: &MacroDomain, prob: &MacroFlowProblem) -> Result<MacroFlowSolution> {
    let dim = dom.dim();
    let v = dim - 1;
    check_tensor("artery permeability", &prob.k_artery, dim, Some(v))?;
    check_tensor("vein permeability", &prob.k_vein, dim, Some(v))?;
    let slab_grid = match prob.case {
        FlowCase::Case2Intermediate => {
            check_tensor("skin permeability", &prob.k_skin, dim, None)?;
            Some(dom.slab_grid().ok_or_else(|| {
                Error::InvalidArgument("the intermediate skin model needs a slab in the domain".into())
            })?)
        }
        _ => {
            let kt = if prob.k_skin.nrows() == dim {
                horizontal_block(&prob.k_skin, dim)
            } else {
                prob.k_skin.clone()
            };
            check_tensor("skin permeability", &kt, dim - 1, None)?;
            None
        }
    };
    let bulk = dom.bulk_grid();
    let surf = dom.surface_grid();
    let index = CoupledIndex::build(dom, true, slab_grid.is_some());

    let mut fixed_a = vec![0.0; bulk.node_count()];
    let mut fixed_v = vec![0.0; bulk.node_count()];
    for s in 0..surf.node_count() {
        let i = dom.bottom_node(s);
        let x = bulk.node_position(i);
        fixed_a[i] = prob.p_artery.eval(&x);
        fixed_v[i] = prob.p_vein.eval(&x);
        if !fixed_a[i].is_finite() || !fixed_v[i].is_finite() {
            return Err(Error::InvalidArgument("Dirichlet pressure is not finite".into()));
        }
    }

    let mut asm = Assembler {
        rows: index.count,
        triplets: TripletBuilder::new(index.count, index.count),
        rhs: vec![0.0; index.count],
    };
    asm.block(&bulk, &prob.k_artery, 1.0, &index.artery, &fixed_a);
    asm.block(&bulk, &prob.k_vein, 1.0, &index.vein, &fixed_v);
    let (skin_k, skin_weight) = match prob.case {
        FlowCase::Case1 => (skin_tangential(&prob.k_skin, dim), 2.0),
        FlowCase::Case2Limit => (skin_tangential(&prob.k_skin, dim), 1.0),
        FlowCase::Case2Intermediate => (prob.k_skin.clone(), 1.0 / dom.slab().unwrap().delta),
    };
    let no_fixed_surf = vec![0.0; surf.node_count()];
    match (&slab_grid, &index.slab) {
        (Some(g), Some(map)) => {
            let zeros = vec![0.0; g.node_count()];
            asm.block(g, &skin_k, skin_weight, map, &zeros);
        }
        _ => asm.block(&surf, &skin_k, skin_weight, &index.surface, &no_fixed_surf),
    }
    if let Some(f) = &prob.sources.artery {
        asm.source(&bulk, f, 1.0, &index.artery);
    }
    if let Some(f) = &prob.sources.vein {
        asm.source(&bulk, f, 1.0, &index.vein);
    }
    if let Some(f) = &prob.sources.surface {
        asm.source(&surf, f, 1.0, &index.surface);
    }

    let a = asm.triplets.build();
    debug_assert_eq!(a.nrows(), asm.rows);
    let precond = Jacobi::from_matrix(&a);
    // start from the bottom values continued upward
    let mut x = vec![0.0; index.count];
    for i in 0..bulk.node_count() {
        let mut c = bulk.node_coords(i);
        c[v] = 0;
        let b = bulk.node_index(c);
        if index.artery[i] != usize::MAX {
            x[index.artery[i]] = 0.5 * (fixed_a[b] + fixed_v[b]);
        }
        if index.vein[i] != usize::MAX && bulk.node_coords(i)[v] < dom.cells()[v] {
            x[index.vein[i]] = 0.5 * (fixed_a[b] + fixed_v[b]);
        }
    }
    if let Some(map) = &index.slab {
        let g = slab_grid.as_ref().unwrap();
        for i in 0..g.node_count() {
            let mut c = g.node_coords(i);
            c[v] = 0;
            x[map[i]] = x[map[g.node_index(c)]];
        }
    }
    let stats = cg(&a, &asm.rhs, &mut x, &precond, prob.solver, None).map_err(|e| e.context("macro flow"))?;

    let p_artery = scatter(&index.artery, &x, &fixed_a);
    let p_vein = scatter(&index.vein, &x, &fixed_v);
    let p_skin = scatter(&index.surface, &x, &no_fixed_surf);
    let p_slab = index.slab.as_ref().map(|m| scatter(m, &x, &vec![0.0; m.len()]));

    let flux_artery = bulk.edge_fluxes(&prob.k_artery, &p_artery);
    let flux_vein = bulk.edge_fluxes(&prob.k_vein, &p_vein);
    let flux_skin = match (&slab_grid, &p_slab) {
        (Some(g), Some(p)) => g.edge_fluxes(&skin_k, p).scaled(skin_weight),
        _ => surf.edge_fluxes(&skin_k, &p_skin).scaled(skin_weight),
    };

    let src_a = source_integrals(&bulk, prob.sources.artery.as_ref());
    let src_v = source_integrals(&bulk, prob.sources.vein.as_ref());
    let src_s = source_integrals(&surf, prob.sources.surface.as_ref());
    let div_a = flux_artery.divergence(&bulk);
    let div_v = flux_vein.divergence(&bulk);
    let div_skin = match &slab_grid {
        Some(g) => flux_skin.divergence(g),
        None => flux_skin.divergence(&surf),
    };
    let ns = surf.node_count();
    let boundary = |div: &[f64], src: &[f64], node: &dyn Fn(usize) -> usize| -> Vec<f64> {
        (0..ns).map(|s| src[node(s)] - div[node(s)]).collect()
    };
    let top = |s| dom.top_node(s);
    let bot = |s| dom.bottom_node(s);
    let interface_flux_artery = boundary(&div_a, &src_a, &top);
    let interface_flux_vein = boundary(&div_v, &src_v, &top);
    let dirichlet_flux_artery = boundary(&div_a, &src_a, &bot);
    let dirichlet_flux_vein = boundary(&div_v, &src_v, &bot);

    // per control volume balance
    let nz = dom.cells()[v];
    let mut max_div = 0.0_f64;
    for i in 0..bulk.node_count() {
        let k = bulk.node_coords(i)[v];
        if k > 0 && k < nz {
            max_div = max_div.max((div_a[i] - src_a[i]).abs());
            max_div = max_div.max((div_v[i] - src_v[i]).abs());
        }
    }
    match &slab_grid {
        Some(g) => {
            for i in 0..g.node_count() {
                let c = g.node_coords(i);
                let mut r = div_skin[i];
                if c[v] == 0 {
                    let mut cs = c;
                    cs[v] = 0;
                    let s = surf.node_index(cs);
                    let t = dom.top_node(s);
                    r += div_a[t] + div_v[t] - src_a[t] - src_v[t] - src_s[s];
                }
                max_div = max_div.max(r.abs());
            }
        }
        None => {
            for s in 0..ns {
                let t = dom.top_node(s);
                let r = div_skin[s] + div_a[t] + div_v[t] - src_a[t] - src_v[t] - src_s[s];
                max_div = max_div.max(r.abs());
            }
        }
    }
    let sum = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).sum::<f64>().abs();
    let l1 = |a: &[f64]| a.iter().map(|x| x.abs()).sum::<f64>();
    let diagnostics = FlowDiagnostics {
        interface_imbalance: sum(&interface_flux_artery, &interface_flux_vein),
        dirichlet_imbalance: sum(&dirichlet_flux_artery, &dirichlet_flux_vein),
        flux_scale: l1(&interface_flux_artery)
            + l1(&interface_flux_vein)
            + l1(&dirichlet_flux_artery)
            + l1(&dirichlet_flux_vein),
        max_divergence: max_div,
    };

    Ok(MacroFlowSolution {
        case: prob.case,
        domain: dom.clone(),
        p_artery,
        p_vein,
        p_skin,
        p_slab,
        flux_artery,
        flux_vein,
        flux_skin,
        interface_flux_artery,
        interface_flux_vein,
        dirichlet_flux_artery,
        dirichlet_flux_vein,
        velocities: None,
        iterations: stats.iterations,
        residual: stats.relative_residual,
        diagnostics,
    })
}

fn skin_tangential(k: &DMatrix<f64>, dim: usize) -> DMatrix<f64> {
    if k.nrows() == dim {
        horizontal_block(k, dim)
    } else {
        k.clone()
    }
}

fn source_integrals(grid: &NodeGrid, f: Option<&ScalarFn>) -> Vec<f64> {
    match f {
        Some(f) => (0..grid.node_count()).map(|i| grid.integrate_dual(i, &|x| f(x))).collect(),
        None => vec![0.0; grid.node_count()],
    }
}

fn expect_case(prob: &MacroFlowProblem, case: FlowCase) -> Result<()> {
    if prob.case != case {
        return Err(Error::InvalidArgument(format!(
            "problem is set up for case {} but case {} was requested",
            prob.case.name(),
            case.name()
        )));
    }
    Ok(())
}

/// Bulk Darcy flow coupled to surface Darcy flow with the factor 2.
pub fn solve_case1(dom: &MacroDomain, prob: &MacroFlowProblem) -> Result<MacroFlowSolution> {
    expect_case(prob, FlowCase::Case1)?;
    solve(dom, prob)
}

/// Bulk Darcy flow coupled to Darcy flow in the slab of height `delta`.
pub fn solve_case2_intermediate(dom: &MacroDomain, prob: &MacroFlowProblem) -> Result<MacroFlowSolution> {
    expect_case(prob, FlowCase::Case2Intermediate)?;
    solve(dom, prob)
}

/// Thin-slab limit: surface Darcy flow without the factor 2.
pub fn solve_case2_limit(dom: &MacroDomain, prob: &MacroFlowProblem) -> Result<MacroFlowSolution> {
    expect_case(prob, FlowCase::Case2Limit)?;
    solve(dom, prob)
}

/// Dispatches on `prob.case`.
pub fn solve_flow(dom: &MacroDomain, prob: &MacroFlowProblem) -> Result<MacroFlowSolution> {
    solve(dom, prob)
}

/// Fills the element velocities `-K grad p` of every phase.
pub fn compute_velocities(
    mut sol: MacroFlowSolution,
    prob: &MacroFlowProblem,
) -> MacroFlowSolution {
    let dom = &sol.domain;
    let dim = dom.dim();
    let bulk = dom.bulk_grid();
    let vel = |grid: &NodeGrid, k: &DMatrix<f64>, s: f64, p: &[f64]| -> Vec<[f64; 3]> {
        grid.element_gradients(p)
            .into_iter()
            .map(|g| {
                let mut out = [0.0; 3];
                for a in 0..grid.dim() {
                    out[a] = -s * (0..grid.dim()).map(|b| k[(a, b)] * g[b]).sum::<f64>();
                }
                out
            })
            .collect()
    };
    let artery = vel(&bulk, &prob.k_artery, 1.0, &sol.p_artery);
    let vein = vel(&bulk, &prob.k_vein, 1.0, &sol.p_vein);
    let skin = match (sol.case, dom.slab_grid(), &sol.p_slab) {
        (FlowCase::Case2Intermediate, Some(g), Some(p)) => vel(&g, &prob.k_skin, 1.0, p),
        (case, _, _) => {
            let s = if case == FlowCase::Case1 { 2.0 } else { 1.0 };
            vel(&dom.surface_grid(), &skin_tangential(&prob.k_skin, dim), s, &sol.p_skin)
        }
    };
    sol.velocities = Some(FlowVelocities { artery, vein, skin });
    sol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SolverOptions;

    fn eye(n: usize) -> DMatrix<f64> {
        DMatrix::identity(n, n)
    }

    fn tight() -> SolverOptions {
        SolverOptions {
            tolerance: 1e-13,
            max_iterations: 50_000,
        }
    }

    #[test]
    fn constant_data_gives_constant_pressure() {
        let dom = MacroDomain::new(&[1.0], 1.0, &[6, 5]).unwrap().with_slab(0.1, 8).unwrap();
        for case in [FlowCase::Case1, FlowCase::Case2Intermediate, FlowCase::Case2Limit] {
            let prob = MacroFlowProblem::new(case, eye(2), eye(2) * 2.0, eye(2), 3.0, 3.0).with_solver(tight());
            let sol = compute_velocities(solve_flow(&dom, &prob).unwrap(), &prob);
            assert!(sol.p_artery.iter().chain(&sol.p_vein).chain(&sol.p_skin).all(|p| (p - 3.0).abs() < 1e-12));
            let v = sol.velocities.unwrap();
            assert!(v.artery.iter().chain(&v.skin).all(|u| u.iter().all(|x| x.abs() < 1e-10)));
        }
    }

    #[test]
    fn antisymmetric_closed_form() {
        let p = 2.0;
        let l = 1.5;
        let dom = MacroDomain::new(&[1.0, 1.0], l, &[4, 3, 6]).unwrap().with_slab(0.2, 8).unwrap();
        for case in [FlowCase::Case1, FlowCase::Case2Intermediate, FlowCase::Case2Limit] {
            let prob = MacroFlowProblem::new(case, eye(3), eye(3), eye(3), p, -p).with_solver(tight());
            let sol = solve_flow(&dom, &prob).unwrap();
            let bulk = dom.bulk_grid();
            for i in 0..bulk.node_count() {
                let z = bulk.node_position(i)[2];
                assert!((sol.p_artery[i] + p * z / l).abs() < 1e-10);
                assert!((sol.p_vein[i] - p * z / l).abs() < 1e-10);
            }
            assert!(sol.p_skin.iter().all(|x| x.abs() < 1e-10));
            if let Some(ps) = &sol.p_slab {
                assert!(ps.iter().all(|x| x.abs() < 1e-10));
            }
            // vertical flux per unit area on the top face
            let surf = dom.surface_grid();
            for s in 0..surf.node_count() {
                let q = sol.interface_flux_artery[s] / surf.dual_volume(s);
                assert!((q - p / l).abs() < 1e-9);
                // shared unknowns: identical trace values
                let t = dom.top_node(s);
                assert_eq!(sol.p_artery[t].to_bits(), sol.p_skin[s].to_bits());
                assert_eq!(sol.p_vein[t].to_bits(), sol.p_skin[s].to_bits());
            }
            assert!(sol.diagnostics.compatible(1e-8));
        }
    }

    #[test]
    fn linear_scaling() {
        let dom = MacroDomain::new(&[1.0], 1.0, &[8, 8]).unwrap();
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let prob = MacroFlowProblem::new(
            FlowCase::Case1,
            k.clone(),
            eye(2),
            eye(1) * 0.3,
            Field::function(|x| 1.0 + x[0]),
            -0.5,
        )
        .with_solver(tight());
        let a = solve_case1(&dom, &prob).unwrap();
        let mut scaled = prob.clone();
        scaled.p_artery = prob.p_artery.scaled(3.0);
        scaled.p_vein = prob.p_vein.scaled(3.0);
        let b = solve_case1(&dom, &scaled).unwrap();
        for (x, y) in a.p_artery.iter().zip(&b.p_artery) {
            assert!((3.0 * x - y).abs() <= 1e-10 * y.abs().max(1.0));
        }
        assert!(a.diagnostics.compatible(1e-8));
        assert!(a.diagnostics.max_divergence < 1e-9);
    }

    #[test]
    fn indefinite_tensor_is_rejected() {
        let dom = MacroDomain::new(&[1.0], 1.0, &[4, 4]).unwrap();
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let prob = MacroFlowProblem::new(FlowCase::Case1, bad, eye(2), eye(1), 1.0, 0.0);
        assert!(matches!(solve_case1(&dom, &prob), Err(Error::SingularSystem(_))));
        let flat = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let prob = MacroFlowProblem::new(FlowCase::Case1, flat, eye(2), eye(1), 1.0, 0.0);
        assert!(matches!(solve_case1(&dom, &prob), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn wrong_case_is_rejected() {
        let dom = MacroDomain::new(&[1.0], 1.0, &[4, 4]).unwrap();
        let prob = MacroFlowProblem::new(FlowCase::Case1, eye(2), eye(2), eye(1), 1.0, 0.0);
        assert!(solve_case2_limit(&dom, &prob).is_err());
        assert!(solve_case2_intermediate(&dom, &prob.clone()).is_err());
    }
}
