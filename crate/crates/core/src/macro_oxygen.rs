//! Homogenized oxygen transport in the fat layer and the skin.
//!
//! Five concentration fields are advanced together with implicit Euler:
//! artery, vein and tissue in the bulk, blood and tissue in the skin. The
//! skin lives on the top-face grid (Case 1 and the Case 2 limit) or on the
//! slab grid (Case 2 intermediate, every slab term weighted by `1/delta`).
//! Artery, vein and skin blood share unknowns on the top face, as do bulk
//! and skin tissue, so the bulk fluxes through the top face enter the skin
//! balance without being formed explicitly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diffusion::PhaseAverages;
use crate::error::{Error, Result};
use crate::field::{Field, SpaceTimeFn, TimeField};
use crate::fvgrid::{EdgeField, NodeGrid};
use crate::linalg::{bicgstab, CsrMatrix, Jacobi, LinearOperator, SolverOptions, TripletBuilder};
use crate::macro_flow::{check_tensor, CoupledIndex, FlowCase, MacroDomain, MacroFlowSolution};

/// Effective coefficients of the skin layer.
#[derive(Debug, Clone)]
pub struct SkinCoefficients {
    pub theta_blood: f64,
    pub theta_tissue: f64,
    /// Case 1 and limit: horizontal block is used; slab: full tensor.
    pub a_blood: DMatrix<f64>,
    pub a_tissue: DMatrix<f64>,
    /// Blood/tissue exchange rate per unit skin measure.
    pub exchange: f64,
}

#[derive(Debug, Clone)]
pub struct OxygenCoefficients {
    /// Volume fractions of artery, vein and tissue.
    pub theta: [f64; 3],
    /// Surface densities of the artery and vein walls.
    pub gamma: [f64; 2],
    /// Wall permeabilities of artery and vein.
    pub lambda: [f64; 2],
    pub a_artery: DMatrix<f64>,
    pub a_vein: DMatrix<f64>,
    pub a_tissue: DMatrix<f64>,
    pub skin: SkinCoefficients,
    /// Mean tissue decay rate in the bulk and in the skin.
    pub decay_bulk: PhaseAverages,
    pub decay_skin: PhaseAverages,
}

/// Volume fluxes through the dual faces of each grid.
#[derive(Debug, Clone)]
pub struct TransportFluxes {
    pub artery: EdgeField,
    pub vein: EdgeField,
    pub skin: EdgeField,
}

impl TransportFluxes {
    pub fn zero(dom: &MacroDomain, case: FlowCase) -> Self {
        let bulk = dom.bulk_grid();
        Self {
            artery: EdgeField::zeros(&bulk),
            vein: EdgeField::zeros(&bulk),
            skin: EdgeField::zeros(&skin_grid(dom, case).expect("slab grid")),
        }
    }

    pub fn from_flow(sol: &MacroFlowSolution) -> Self {
        Self {
            artery: sol.flux_artery.clone(),
            vein: sol.flux_vein.clone(),
            skin: sol.flux_skin.clone(),
        }
    }
}

/// Initial data. At top-face nodes the skin values are used.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub artery: Field,
    pub vein: Field,
    pub tissue: Field,
    pub skin_blood: Field,
    pub skin_tissue: Field,
}

impl InitialData {
    pub fn uniform(c: f64) -> Self {
        Self {
            artery: c.into(),
            vein: c.into(),
            tissue: c.into(),
            skin_blood: c.into(),
            skin_tissue: c.into(),
        }
    }
}

/// Optional volume sources, used for manufactured solutions.
#[derive(Clone, Default)]
pub struct OxygenSources {
    pub artery: Option<SpaceTimeFn>,
    pub vein: Option<SpaceTimeFn>,
    pub tissue: Option<SpaceTimeFn>,
    pub skin_blood: Option<SpaceTimeFn>,
    pub skin_tissue: Option<SpaceTimeFn>,
}

impl std::fmt::Debug for OxygenSources {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("OxygenSources(..)")
    }
}

impl OxygenSources {
    fn is_empty(&self) -> bool {
        self.artery.is_none()
            && self.vein.is_none()
            && self.tissue.is_none()
            && self.skin_blood.is_none()
            && self.skin_tissue.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct OxygenProblem {
    pub domain: MacroDomain,
    pub case: FlowCase,
    pub coefficients: OxygenCoefficients,
    pub fluxes: TransportFluxes,
    pub dirichlet_artery: TimeField,
    pub dirichlet_vein: TimeField,
    /// When false the bottom face is closed to both blood phases.
    pub dirichlet_bottom: bool,
    pub initial: InitialData,
    pub sources: OxygenSources,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Advection {
    /// First-order upwind; preserves the discrete maximum principle.
    Upwind,
    /// Upwind plus an explicit minmod-limited correction. Not covered by
    /// the maximum principle.
    Limited,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub final_time: f64,
    pub solver: SolverOptions,
    /// Keep every `output_every`-th state (the final state is always kept).
    pub output_every: usize,
    pub advection: Advection,
}

impl StepperConfig {
    pub fn new(dt: f64, final_time: f64) -> Self {
        Self {
            dt,
            final_time,
            solver: SolverOptions::default(),
            output_every: 1,
            advection: Advection::Upwind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.final_time >= 0.0 && self.final_time.is_finite()) {
            return Err(Error::InvalidArgument("final time must be nonnegative".into()));
        }
        if self.output_every == 0 {
            return Err(Error::InvalidArgument("output cadence must be at least 1".into()));
        }
        Ok(())
    }
}

/// Nodal concentrations. Bulk fields live on the bulk grid; skin fields on
/// the surface grid or the slab grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OxygenState {
    pub time: f64,
    pub artery: Vec<f64>,
    pub vein: Vec<f64>,
    pub tissue: Vec<f64>,
    pub skin_blood: Vec<f64>,
    pub skin_tissue: Vec<f64>,
}

impl OxygenState {
    pub fn min(&self) -> f64 {
        self.fields().iter().flat_map(|f| f.iter()).fold(f64::INFINITY, |m, v| m.min(*v))
    }

    pub fn max(&self) -> f64 {
        self.fields().iter().flat_map(|f| f.iter()).fold(f64::NEG_INFINITY, |m, v| m.max(*v))
    }

    pub fn fields(&self) -> [&Vec<f64>; 5] {
        [&self.artery, &self.vein, &self.tissue, &self.skin_blood, &self.skin_tissue]
    }

    pub const FIELD_NAMES: [&'static str; 5] = ["artery", "vein", "tissue", "skin_blood", "skin_tissue"];

    /// Largest absolute difference over all fields.
    pub fn max_difference(&self, other: &OxygenState) -> f64 {
        self.fields()
            .iter()
            .zip(other.fields())
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// The skin grid of a case.
pub fn skin_grid(dom: &MacroDomain, case: FlowCase) -> Result<NodeGrid> {
    match case {
        FlowCase::Case2Intermediate => dom
            .slab_grid()
            .ok_or_else(|| Error::InvalidArgument("the intermediate skin model needs a slab in the domain".into())),
        _ => Ok(dom.surface_grid()),
    }
}

/// Skin values on the top face (the slab bottom for the slab model).
pub fn skin_trace(dom: &MacroDomain, case: FlowCase, field: &[f64]) -> Vec<f64> {
    match case {
        FlowCase::Case2Intermediate => field[..dom.surface_grid().node_count()].to_vec(),
        _ => field.to_vec(),
    }
}

/// Heuristic step `L^2 / (100 max eigenvalue of A)` over the bulk tensors.
pub fn default_time_step(prob: &OxygenProblem) -> f64 {
    let c = &prob.coefficients;
    let lmax = [&c.a_artery, &c.a_vein, &c.a_tissue]
        .iter()
        .map(|a| ((*a + a.transpose()) * 0.5).symmetric_eigenvalues().max())
        .fold(0.0_f64, f64::max);
    let l = prob.domain.depth();
    if lmax > 0.0 {
        l * l / (100.0 * lmax)
    } else {
        l * l / 100.0
    }
}

/// Per-unknown data of the assembled system.
#[derive(Debug, Clone)]
pub struct OxygenSystem {
    /// Diffusion, advection and exchange. Column sums vanish for
    /// divergence-free fluxes without Dirichlet data.
    pub operator: CsrMatrix,
    /// Lumped mass of every unknown.
    pub mass: Vec<f64>,
    /// Decay weights: multiplied by the bulk and skin mean decay rates.
    pub decay_bulk: Vec<f64>,
    pub decay_skin: Vec<f64>,
    /// Couplings to Dirichlet values: (row, bulk node, value, vein?).
    boundary: Vec<(usize, usize, f64, bool)>,
    blood: CoupledIndex,
    tissue_bulk: Vec<usize>,
    tissue_skin: Vec<usize>,
    skin_weight: f64,
}

impl OxygenSystem {
    pub fn unknowns(&self) -> usize {
        self.mass.len()
    }
}

fn skin_tensor(a: &DMatrix<f64>, dim: usize, case: FlowCase) -> DMatrix<f64> {
    match case {
        FlowCase::Case2Intermediate => a.clone(),
        _ if a.nrows() == dim => a.view((0, 0), (dim - 1, dim - 1)).into_owned(),
        _ => a.clone(),
    }
}

struct Builder<'a> {
    t: &'a mut TripletBuilder,
    boundary: &'a mut Vec<(usize, usize, f64, bool)>,
}

impl Builder<'_> {
    /// Adds a coupling through `map`; fixed columns go to the boundary list.
    fn add(&mut self, map: &[usize], i: usize, j: usize, v: f64, vein: bool) {
        let r = map[i];
        if r == usize::MAX {
            return;
        }
        let c = map[j];
        if c == usize::MAX {
            self.boundary.push((r, j, v, vein));
        } else {
            self.t.push(r, c, v);
        }
    }

    fn stiffness(&mut self, grid: &NodeGrid, a: &DMatrix<f64>, w: f64, map: &[usize], vein: bool) {
        let aw = a * w;
        let mut entries = Vec::new();
        grid.stiffness(&aw, |i, j, v| entries.push((i, j, v)));
        for (i, j, v) in entries {
            self.add(map, i, j, v, vein);
        }
    }

    fn upwind(&mut self, grid: &NodeGrid, flux: &EdgeField, map: &[usize], vein: bool) {
        let s = grid.nodes_per_axis();
        for a in 0..grid.dim() {
            for i in 0..grid.node_count() {
                let c = grid.node_coords(i);
                if c[a] + 1 >= s[a] {
                    continue;
                }
                let f = flux.values[a][i];
                if f == 0.0 {
                    continue;
                }
                let mut cj = c;
                cj[a] += 1;
                let j = grid.node_index(cj);
                let (from, to, q) = if f > 0.0 { (i, j, f) } else { (j, i, -f) };
                self.add(map, from, from, q, vein);
                self.add(map, to, from, -q, vein);
            }
        }
    }
}

impl OxygenProblem {
    fn validate(&self) -> Result<()> {
        let c = &self.coefficients;
        let dim = self.domain.dim();
        for (name, v) in [
            ("theta_artery", c.theta[0]),
            ("theta_vein", c.theta[1]),
            ("theta_tissue", c.theta[2]),
            ("gamma_artery", c.gamma[0]),
            ("gamma_vein", c.gamma[1]),
            ("lambda_artery", c.lambda[0]),
            ("lambda_vein", c.lambda[1]),
            ("skin theta_blood", c.skin.theta_blood),
            ("skin theta_tissue", c.skin.theta_tissue),
            ("skin exchange", c.skin.exchange),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if c.theta.iter().all(|&t| t == 0.0) {
            return Err(Error::InvalidArgument("all volume fractions are zero".into()));
        }
        check_tensor("artery diffusion", &c.a_artery, dim, None)?;
        check_tensor("vein diffusion", &c.a_vein, dim, None)?;
        check_tensor("tissue diffusion", &c.a_tissue, dim, None)?;
        let sd = if self.case == FlowCase::Case2Intermediate { dim } else { dim - 1 };
        check_tensor("skin blood diffusion", &skin_tensor(&c.skin.a_blood, dim, self.case), sd, None)?;
        check_tensor("skin tissue diffusion", &skin_tensor(&c.skin.a_tissue, dim, self.case), sd, None)?;
        for d in [&c.decay_bulk, &c.decay_skin] {
            if d.times.len() != d.means.len() || d.means.iter().any(|m| !(*m >= 0.0 && m.is_finite())) {
                return Err(Error::InvalidArgument("decay samples must be finite and nonnegative".into()));
            }
        }
        let sg = skin_grid(&self.domain, self.case)?;
        let bulk = self.domain.bulk_grid();
        let shapes_ok = self.fluxes.artery.values.len() == dim
            && self.fluxes.artery.values.iter().all(|v| v.len() == bulk.node_count())
            && self.fluxes.vein.values.iter().all(|v| v.len() == bulk.node_count())
            && self.fluxes.skin.values.len() == sg.dim()
            && self.fluxes.skin.values.iter().all(|v| v.len() == sg.node_count());
        if !shapes_ok {
            return Err(Error::ShapeMismatch("transport fluxes do not match the domain grids".into()));
        }
        Ok(())
    }

    /// Assembles the time-independent part of the coupled system.
    pub fn system(&self) -> Result<OxygenSystem> {
        self.validate()?;
        let dom = &self.domain;
        let c = &self.coefficients;
        let dim = dom.dim();
        let bulk = dom.bulk_grid();
        let sg = skin_grid(dom, self.case)?;
        let with_slab = self.case == FlowCase::Case2Intermediate;
        let skin_weight = if with_slab { 1.0 / dom.slab().unwrap().delta } else { 1.0 };

        let mut blood = CoupledIndex::build(dom, self.dirichlet_bottom, with_slab);
        let blood_skin = if with_slab { blood.slab.clone().unwrap() } else { blood.surface.clone() };
        // tissue unknowns follow the blood unknowns
        let mut n = blood.count;
        let tissue_bulk: Vec<usize> = (0..bulk.node_count())
            .map(|_| {
                n += 1;
                n - 1
            })
            .collect();
        let v = dim - 1;
        let nz = dom.cells()[v];
        let tissue_skin: Vec<usize> = (0..sg.node_count())
            .map(|i| {
                let cc = sg.node_coords(i);
                let on_top = if with_slab { cc[v] == 0 } else { true };
                if on_top {
                    let mut cb = cc;
                    cb[v] = nz;
                    tissue_bulk[bulk.node_index(cb)]
                } else {
                    n += 1;
                    n - 1
                }
            })
            .collect();
        blood.count = n;

        let mut t = TripletBuilder::new(n, n);
        let mut boundary = Vec::new();
        let mut mass = vec![0.0; n];
        let mut decay_bulk = vec![0.0; n];
        let mut decay_skin = vec![0.0; n];
        {
            let mut b = Builder {
                t: &mut t,
                boundary: &mut boundary,
            };
            b.stiffness(&bulk, &c.a_artery, 1.0, &blood.artery, false);
            b.stiffness(&bulk, &c.a_vein, 1.0, &blood.vein, true);
            b.stiffness(&bulk, &c.a_tissue, 1.0, &tissue_bulk, false);
            b.upwind(&bulk, &self.fluxes.artery, &blood.artery, false);
            b.upwind(&bulk, &self.fluxes.vein, &blood.vein, true);
            let sb = skin_tensor(&c.skin.a_blood, dim, self.case);
            let st = skin_tensor(&c.skin.a_tissue, dim, self.case);
            b.stiffness(&sg, &sb, skin_weight, &blood_skin, false);
            b.stiffness(&sg, &st, skin_weight, &tissue_skin, false);
            // skin fluxes already carry their weight
            b.upwind(&sg, &self.fluxes.skin, &blood_skin, false);
            for i in 0..bulk.node_count() {
                let vol = bulk.dual_volume(i);
                let s = tissue_bulk[i];
                for (map, l, vein) in [(&blood.artery, 0, false), (&blood.vein, 1, true)] {
                    let k = c.lambda[l] * c.gamma[l] * vol;
                    if k != 0.0 {
                        // blood row: k (c_l - c_s), tissue row: k (c_s - c_l)
                        b.add(map, i, i, k, vein);
                        if map[i] != usize::MAX {
                            b.t.push(map[i], s, -k);
                            b.t.push(s, map[i], -k);
                        } else {
                            b.boundary.push((s, i, -k, vein));
                        }
                        b.t.push(s, s, k);
                    }
                    if map[i] != usize::MAX {
                        mass[map[i]] += c.theta[l] * vol;
                    }
                }
                mass[s] += c.theta[2] * vol;
                decay_bulk[s] += c.theta[2] * vol;
            }
            for i in 0..sg.node_count() {
                let vol = skin_weight * sg.dual_volume(i);
                let (rb, rt) = (blood_skin[i], tissue_skin[i]);
                let k = c.skin.exchange * vol;
                if k != 0.0 {
                    b.t.push(rb, rb, k);
                    b.t.push(rb, rt, -k);
                    b.t.push(rt, rb, -k);
                    b.t.push(rt, rt, k);
                }
                mass[rb] += c.skin.theta_blood * vol;
                mass[rt] += c.skin.theta_tissue * vol;
                decay_skin[rt] += c.skin.theta_tissue * vol;
            }
        }
        Ok(OxygenSystem {
            operator: t.build(),
            mass,
            decay_bulk,
            decay_skin,
            boundary,
            blood,
            tissue_bulk,
            tissue_skin,
            skin_weight,
        })
    }

    /// Dirichlet value of bulk node `i` at time `t`.
    fn dirichlet(&self, i: usize, vein: bool, t: f64) -> f64 {
        let x = self.domain.bulk_grid().node_position(i);
        if vein {
            self.dirichlet_vein.eval(&x, t)
        } else {
            self.dirichlet_artery.eval(&x, t)
        }
    }

    /// Initial state on every grid.
    pub fn initial_state(&self) -> Result<OxygenState> {
        let sys = self.system()?;
        let dom = &self.domain;
        let bulk = dom.bulk_grid();
        let sg = skin_grid(dom, self.case)?;
        let mut x = vec![0.0; sys.unknowns()];
        let ev = |f: &Field, g: &NodeGrid, i: usize| f.eval(&g.node_position(i));
        for i in 0..bulk.node_count() {
            if sys.blood.artery[i] != usize::MAX {
                x[sys.blood.artery[i]] = ev(&self.initial.artery, &bulk, i);
            }
            if sys.blood.vein[i] != usize::MAX {
                x[sys.blood.vein[i]] = ev(&self.initial.vein, &bulk, i);
            }
            x[sys.tissue_bulk[i]] = ev(&self.initial.tissue, &bulk, i);
        }
        let blood_skin = sys.blood_skin();
        for i in 0..sg.node_count() {
            x[blood_skin[i]] = ev(&self.initial.skin_blood, &sg, i);
            x[sys.tissue_skin[i]] = ev(&self.initial.skin_tissue, &sg, i);
        }
        if let Some(i) = x.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "initial concentration at unknown {i} is negative or not finite ({})",
                x[i]
            )));
        }
        Ok(self.scatter(&sys, &x, 0.0))
    }

    fn scatter(&self, sys: &OxygenSystem, x: &[f64], t: f64) -> OxygenState {
        let bulk = self.domain.bulk_grid();
        let field = |map: &[usize], vein: bool| -> Vec<f64> {
            map.iter()
                .enumerate()
                .map(|(i, &r)| if r == usize::MAX { self.dirichlet(i, vein, t) } else { x[r] })
                .collect()
        };
        let _ = bulk;
        OxygenState {
            time: t,
            artery: field(&sys.blood.artery, false),
            vein: field(&sys.blood.vein, true),
            tissue: field(&sys.tissue_bulk, false),
            skin_blood: field(&sys.blood_skin(), false),
            skin_tissue: field(&sys.tissue_skin, false),
        }
    }

    fn gather(&self, sys: &OxygenSystem, s: &OxygenState) -> Result<Vec<f64>> {
        let mut x = vec![0.0; sys.unknowns()];
        let put = |x: &mut Vec<f64>, map: &[usize], f: &[f64]| -> Result<()> {
            if map.len() != f.len() {
                return Err(Error::ShapeMismatch("state does not match the problem grids".into()));
            }
            for (&r, &v) in map.iter().zip(f) {
                if r != usize::MAX {
                    x[r] = v;
                }
            }
            Ok(())
        };
        put(&mut x, &sys.blood.artery, &s.artery)?;
        put(&mut x, &sys.blood.vein, &s.vein)?;
        put(&mut x, &sys.tissue_bulk, &s.tissue)?;
        put(&mut x, &sys.blood_skin(), &s.skin_blood)?;
        put(&mut x, &sys.tissue_skin, &s.skin_tissue)?;
        Ok(x)
    }

    /// Dirichlet and source contributions at time `t`.
    fn load(&self, sys: &OxygenSystem, t: f64) -> Vec<f64> {
        let mut b = vec![0.0; sys.unknowns()];
        for &(r, node, v, vein) in &sys.boundary {
            b[r] -= v * self.dirichlet(node, vein, t);
        }
        if self.sources.is_empty() {
            return b;
        }
        let bulk = self.domain.bulk_grid();
        let sg = skin_grid(&self.domain, self.case).expect("validated");
        let blood_skin = sys.blood_skin();
        let mut add = |grid: &NodeGrid, f: &Option<SpaceTimeFn>, map: &[usize], w: f64| {
            if let Some(f) = f {
                for (i, &r) in map.iter().enumerate() {
                    if r != usize::MAX {
                        b[r] += w * grid.integrate_dual(i, &|x| f(x, t));
                    }
                }
            }
        };
        add(&bulk, &self.sources.artery, &sys.blood.artery, 1.0);
        add(&bulk, &self.sources.vein, &sys.blood.vein, 1.0);
        add(&bulk, &self.sources.tissue, &sys.tissue_bulk, 1.0);
        add(&sg, &self.sources.skin_blood, &blood_skin, sys.skin_weight);
        add(&sg, &self.sources.skin_tissue, &sys.tissue_skin, sys.skin_weight);
        b
    }

    /// Explicit limited correction of the upwind fluxes for the state `s`.
    fn limiter_correction(&self, sys: &OxygenSystem, s: &OxygenState) -> Vec<f64> {
        let mut b = vec![0.0; sys.unknowns()];
        let bulk = self.domain.bulk_grid();
        let sg = skin_grid(&self.domain, self.case).expect("validated");
        let blood_skin = sys.blood_skin();
        for (grid, flux, field, map) in [
            (&bulk, &self.fluxes.artery, &s.artery, &sys.blood.artery),
            (&bulk, &self.fluxes.vein, &s.vein, &sys.blood.vein),
            (&sg, &self.fluxes.skin, &s.skin_blood, &blood_skin),
        ] {
            let n = grid.nodes_per_axis();
            for a in 0..grid.dim() {
                for i in 0..grid.node_count() {
                    let c = grid.node_coords(i);
                    if c[a] + 1 >= n[a] || flux.values[a][i] == 0.0 {
                        continue;
                    }
                    let f = flux.values[a][i];
                    let mut cj = c;
                    cj[a] += 1;
                    let j = grid.node_index(cj);
                    // upstream node and the node behind it
                    let (up, down, back) = if f > 0.0 {
                        let back = (c[a] > 0).then(|| {
                            let mut cb = c;
                            cb[a] -= 1;
                            grid.node_index(cb)
                        });
                        (i, j, back)
                    } else {
                        let back = (cj[a] + 1 < n[a]).then(|| {
                            let mut cb = cj;
                            cb[a] += 1;
                            grid.node_index(cb)
                        });
                        (j, i, back)
                    };
                    let Some(back) = back else { continue };
                    let corr = 0.5 * minmod(field[down] - field[up], field[up] - field[back]);
                    let q = f.abs() * corr;
                    if map[up] != usize::MAX {
                        b[map[up]] -= q;
                    }
                    if map[down] != usize::MAX {
                        b[map[down]] += q;
                    }
                }
            }
        }
        b
    }

    /// Total mass weighted by volume fractions, skin included.
    pub fn total_mass(&self, s: &OxygenState) -> Result<f64> {
        let sys = self.system()?;
        let x = self.gather(&sys, s)?;
        Ok(sys.mass.iter().zip(&x).map(|(m, v)| m * v).sum())
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

impl OxygenSystem {
    fn blood_skin(&self) -> Vec<usize> {
        match &self.blood.slab {
            Some(m) => m.clone(),
            None => self.blood.surface.clone(),
        }
    }

    fn diagonal_shift(&self, mass_scale: f64, d_bulk: f64, d_skin: f64) -> Vec<f64> {
        (0..self.unknowns())
            .map(|i| mass_scale * self.mass[i] + d_bulk * self.decay_bulk[i] + d_skin * self.decay_skin[i])
            .collect()
    }
}

/// `A + diag(d)` without copying `A`.
struct Shifted<'a> {
    a: &'a CsrMatrix,
    d: &'a [f64],
}

impl LinearOperator for Shifted<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.a.mul_vec_into(x, y);
        for ((yi, di), xi) in y.iter_mut().zip(self.d).zip(x) {
            *yi += di * xi;
        }
    }
}

fn solve_shifted(a: &CsrMatrix, shift: &[f64], b: &[f64], x: &mut [f64], opts: SolverOptions) -> Result<()> {
    let diag: Vec<f64> = a.diagonal().iter().zip(shift).map(|(x, y)| x + y).collect();
    let op = Shifted { a, d: shift };
    bicgstab(&op, b, x, &Jacobi::new(&diag), opts).map_err(|e| e.context("oxygen transport"))?;
    Ok(())
}

fn check_nonnegative(s: &OxygenState) -> Result<()> {
    for (name, f) in OxygenState::FIELD_NAMES.iter().zip(s.fields()) {
        if let Some((node, &value)) = f.iter().enumerate().find(|(_, v)| **v < -1e-12 || v.is_nan()) {
            return Err(Error::NegativeConcentration {
                field: name,
                node,
                value,
            });
        }
    }
    Ok(())
}

/// One implicit Euler step of length `cfg.dt`.
pub fn step(state: &OxygenState, prob: &OxygenProblem, cfg: &StepperConfig) -> Result<OxygenState> {
    cfg.validate()?;
    let sys = prob.system()?;
    step_with(&sys, state, prob, cfg)
}

fn step_with(sys: &OxygenSystem, state: &OxygenState, prob: &OxygenProblem, cfg: &StepperConfig) -> Result<OxygenState> {
    let t1 = state.time + cfg.dt;
    let c = &prob.coefficients;
    let shift = sys.diagonal_shift(1.0 / cfg.dt, c.decay_bulk.at(t1), c.decay_skin.at(t1));
    let x0 = prob.gather(sys, state)?;
    let mut b = prob.load(sys, t1);
    for i in 0..b.len() {
        b[i] += sys.mass[i] / cfg.dt * x0[i];
    }
    if cfg.advection == Advection::Limited {
        for (bi, ci) in b.iter_mut().zip(prob.limiter_correction(sys, state)) {
            *bi += ci;
        }
    }
    let mut x = x0;
    solve_shifted(&sys.operator, &shift, &b, &mut x, cfg.solver)?;
    let next = prob.scatter(sys, &x, t1);
    check_nonnegative(&next)?;
    Ok(next)
}

/// Runs from the initial state to `cfg.final_time` with uniform steps.
/// Returns the initial state followed by every `output_every`-th state and
/// the final one.
pub fn run_transient(prob: &OxygenProblem, cfg: &StepperConfig) -> Result<Vec<OxygenState>> {
    cfg.validate()?;
    let sys = prob.system()?;
    let mut state = prob.initial_state()?;
    let steps = (cfg.final_time / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    let mut out = vec![state.clone()];
    for k in 1..=steps {
        state = step_with(&sys, &state, prob, cfg)?;
        if k % cfg.output_every == 0 || k == steps {
            out.push(state.clone());
        }
    }
    Ok(out)
}

/// Solves the stationary system with the data frozen at time `t`.
pub fn steady_state(prob: &OxygenProblem, t: f64, solver: SolverOptions) -> Result<OxygenState> {
    let sys = prob.system()?;
    let c = &prob.coefficients;
    let (db, ds) = (c.decay_bulk.at(t), c.decay_skin.at(t));
    let absorbing = prob.dirichlet_bottom && (c.lambda[0] * c.gamma[0] > 0.0 || c.lambda[1] * c.gamma[1] > 0.0 || db > 0.0);
    if !absorbing && db <= 0.0 && ds <= 0.0 {
        return Err(Error::SingularSystem(
            "stationary oxygen problem has neither decay nor Dirichlet data".into(),
        ));
    }
    if !prob.dirichlet_bottom && (db <= 0.0 || c.theta[2] == 0.0) {
        return Err(Error::SingularSystem(
            "stationary oxygen problem without Dirichlet data needs bulk tissue decay".into(),
        ));
    }
    let shift = sys.diagonal_shift(0.0, db, ds);
    let b = prob.load(&sys, t);
    let mut x = vec![0.0; sys.unknowns()];
    solve_shifted(&sys.operator, &shift, &b, &mut x, solver)?;
    let s = prob.scatter(&sys, &x, t);
    check_nonnegative(&s)?;
    Ok(s)
}
