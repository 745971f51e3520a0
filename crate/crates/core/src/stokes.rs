//! Periodic Stokes cell problems on a MAC staggered grid and the resulting
//! permeability tensors.
//!
//! Velocities live on voxel faces whose two neighbors are both fluid;
//! faces touching a solid voxel or a horizontal boundary of a case-1 skin cell
//! carry zero normal velocity and are not unknowns. Pressures live at fluid
//! voxel centers. Tangential velocity next to a wall aligned with the grid
//! uses a mirrored ghost value (zero at the wall). The bottom of a case-1 cell
//! is a slip wall: the ghost is the even reflection instead.
//!
//! The saddle system is solved with unit viscosity and the velocity is
//! rescaled afterwards, so `K(mu) = K(1) / mu` holds to rounding.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{components, percolates, CellKind, CellMask, FacetLabel, GridSpec, PhaseSelector};
use crate::linalg::{minres, project_group_means, CsrMatrix, Jacobi, SolverOptions, TripletBuilder};

/// Boundary conditions of the three Stokes cell families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StokesBc {
    /// Fully periodic, no-slip on the vessel wall.
    FatCell,
    /// Horizontally periodic, no-slip on the walls and the top, slip bottom.
    SkinCase1,
    /// Fully periodic skin cell, no-slip on the walls.
    SkinCase2,
}

impl StokesBc {
    pub fn for_kind(kind: CellKind) -> Self {
        match kind {
            CellKind::Fat => StokesBc::FatCell,
            CellKind::SkinCase1 => StokesBc::SkinCase1,
            CellKind::SkinCase2 => StokesBc::SkinCase2,
        }
    }

    pub fn kind(self) -> CellKind {
        match self {
            StokesBc::FatCell => CellKind::Fat,
            StokesBc::SkinCase1 => CellKind::SkinCase1,
            StokesBc::SkinCase2 => CellKind::SkinCase2,
        }
    }

    /// Number of forcing directions for a cell of dimension `dim`.
    pub fn directions(self, dim: usize) -> usize {
        match self {
            StokesBc::SkinCase1 => dim - 1,
            _ => dim,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StokesCellProblem<'a> {
    pub mask: &'a CellMask,
    pub bc: StokesBc,
    /// Fluid phase: artery or vein for fat cells, usually blood for skin cells.
    pub fluid: PhaseSelector,
    pub viscosity: f64,
    pub direction: usize,
    pub solver: SolverOptions,
}

impl<'a> StokesCellProblem<'a> {
    /// Problem with the boundary conditions implied by the mask's cell kind.
    pub fn new(mask: &'a CellMask, fluid: PhaseSelector, direction: usize) -> Self {
        Self {
            mask,
            bc: StokesBc::for_kind(mask.kind()),
            fluid,
            viscosity: 1.0,
            direction,
            solver: SolverOptions::default(),
        }
    }

    pub fn with_viscosity(mut self, mu: f64) -> Self {
        self.viscosity = mu;
        self
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }
}

/// Identifies the setup a cell solution was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct StokesProvenance {
    pub grid: GridSpec,
    pub bc: StokesBc,
    pub fluid: PhaseSelector,
    pub viscosity: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct StokesCellSolution {
    pub provenance: StokesProvenance,
    pub direction: usize,
    /// Face velocities per axis, indexed like [`crate::lattice::Lattice::face_index`].
    pub velocity: Vec<Vec<f64>>,
    /// Pressure at voxel centers; zero outside the fluid. Zero mean on every
    /// connected fluid component.
    pub pressure: Vec<f64>,
    pub iterations: usize,
    /// Relative residual of the saddle-point system.
    pub momentum_residual: f64,
    /// Largest discrete divergence over fluid voxels.
    pub divergence_residual: f64,
}

/// Effective permeability with the setup it was computed for.
#[derive(Debug, Clone)]
pub struct PermeabilityTensor {
    pub k: DMatrix<f64>,
    pub provenance: StokesProvenance,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

struct Layout {
    /// Unknown index per face per axis, `usize::MAX` when pinned.
    uidx: Vec<Vec<usize>>,
    /// Pressure unknown index per voxel (offset by the velocity count).
    pidx: Vec<usize>,
    nu: usize,
    np: usize,
    groups: Vec<usize>,
    n_groups: usize,
}

fn layout(mask: &CellMask, fluid: PhaseSelector) -> Layout {
    let lat = mask.lattice();
    let dim = mask.dim();
    let is_fluid = |c: [usize; 3]| fluid.contains(mask.phase_at(c));
    let mut uidx = Vec::with_capacity(dim);
    let mut nu = 0;
    for axis in 0..dim {
        let mut idx = vec![usize::MAX; lat.face_count(axis)];
        for (f, slot) in idx.iter_mut().enumerate() {
            let c = lat.face_coords(axis, f);
            if let (Some(l), Some(r)) = lat.face_voxels(axis, c) {
                if is_fluid(l) && is_fluid(r) {
                    *slot = nu;
                    nu += 1;
                }
            }
        }
        uidx.push(idx);
    }
    let (labels, n_groups) = components(mask, fluid);
    let mut pidx = vec![usize::MAX; lat.len()];
    let mut groups = vec![usize::MAX; nu];
    let mut np = 0;
    for v in 0..lat.len() {
        if labels[v] != usize::MAX {
            pidx[v] = nu + np;
            groups.push(labels[v]);
            np += 1;
        }
    }
    Layout {
        uidx,
        pidx,
        nu,
        np,
        groups,
        n_groups,
    }
}

fn assemble(mask: &CellMask, bc: StokesBc, lay: &Layout) -> CsrMatrix {
    let lat = mask.lattice();
    let dim = mask.dim();
    let n = lay.nu + lay.np;
    let mut t = TripletBuilder::with_capacity(n, n, lay.nu * (2 * dim + 3) + 2 * lay.nu);
    let vertical = dim - 1;
    for d in 0..dim {
        let hd = lat.h(d);
        for (f, &row) in lay.uidx[d].iter().enumerate() {
            if row == usize::MAX {
                continue;
            }
            let c = lat.face_coords(d, f);
            let mut diag = 0.0;
            for e in 0..dim {
                let inv_h2 = 1.0 / (lat.h(e) * lat.h(e));
                for step in [-1isize, 1] {
                    if e == d {
                        // neighboring face of the same orientation; zero if pinned
                        let nb = shift_face(lat, d, c, step);
                        diag += inv_h2;
                        if let Some(g) = nb {
                            let col = lay.uidx[d][lat.face_index(d, g)];
                            if col != usize::MAX {
                                t.push(row, col, -inv_h2);
                            }
                        }
                        continue;
                    }
                    match shift_face(lat, e, c, step).filter(|g| g[e] < lat.n()[e]) {
                        None => {
                            // outside a case-1 cell: top is no-slip, bottom is slip
                            debug_assert!(bc == StokesBc::SkinCase1 && e == vertical);
                            if step > 0 {
                                diag += 2.0 * inv_h2;
                            }
                        }
                        Some(g) => {
                            let col = lay.uidx[d][lat.face_index(d, g)];
                            if col != usize::MAX {
                                diag += inv_h2;
                                t.push(row, col, -inv_h2);
                            } else {
                                let (l, r) = lat.face_voxels(d, g);
                                let solid = |v: Option<[usize; 3]>| v.is_none_or(|v| !fluid_at(mask, lay, v));
                                if solid(l) && solid(r) {
                                    // wall aligned with the face: mirrored ghost
                                    diag += 2.0 * inv_h2;
                                } else {
                                    diag += inv_h2;
                                }
                            }
                        }
                    }
                }
            }
            t.push(row, row, diag);
            // pressure gradient and its transpose
            let (l, r) = lat.face_voxels(d, c);
            let pl = lay.pidx[lat.index(l.unwrap())];
            let pr = lay.pidx[lat.index(r.unwrap())];
            t.push(row, pr, 1.0 / hd);
            t.push(row, pl, -1.0 / hd);
            t.push(pr, row, 1.0 / hd);
            t.push(pl, row, -1.0 / hd);
        }
    }
    t.build()
}

#[inline]
fn fluid_at(_mask: &CellMask, lay: &Layout, v: [usize; 3]) -> bool {
    lay.pidx[_mask.lattice().index(v)] != usize::MAX
}

/// Face coordinates shifted by one along `axis`, wrapping periodic axes.
/// Returns `None` past a non-periodic boundary; for faces normal to `axis`
/// the top layer index `n` is a valid result.
fn shift_face(lat: &crate::lattice::Lattice, axis: usize, c: [usize; 3], step: isize) -> Option<[usize; 3]> {
    let n = lat.n()[axis];
    let mut g = c;
    if lat.periodic(axis) {
        g[axis] = ((c[axis] as isize + step).rem_euclid(n as isize)) as usize;
        return Some(g);
    }
    let v = c[axis] as isize + step;
    if v < 0 || v as usize > n {
        None
    } else {
        g[axis] = v as usize;
        Some(g)
    }
}

/// Solves one Stokes cell problem.
pub fn solve_stokes_cell(problem: &StokesCellProblem) -> Result<StokesCellSolution> {
    let mask = problem.mask;
    let dim = mask.dim();
    if problem.bc.kind() != mask.kind() {
        return Err(Error::InvalidArgument(format!(
            "boundary conditions {:?} do not match a {} cell",
            problem.bc,
            mask.kind().name()
        )));
    }
    if !(problem.viscosity > 0.0) || !problem.viscosity.is_finite() {
        return Err(Error::InvalidArgument(format!("viscosity must be positive, got {}", problem.viscosity)));
    }
    if problem.direction >= problem.bc.directions(dim) {
        return Err(Error::InvalidArgument(format!(
            "forcing direction {} out of range for {:?} in {dim}D",
            problem.direction, problem.bc
        )));
    }
    if mask.count_selected(problem.fluid) == 0 {
        return Err(Error::NoFluid);
    }
    let lat = mask.lattice();
    if !(0..dim).any(|d| lat.periodic(d) && percolates(mask, problem.fluid, d)) {
        return Err(Error::DisconnectedFluid);
    }
    let lay = layout(mask, problem.fluid);
    if lay.nu == 0 {
        return Err(Error::SingularSystem("no free velocity faces".into()));
    }
    let has_wall = (0..dim).any(|d| {
        mask.facets(d).iter().any(|&l| l.is_wall() || l == FacetLabel::Top || l == FacetLabel::Sigma)
    }) || mask.count_selected(problem.fluid) < lat.len();
    if !has_wall {
        return Err(Error::SingularSystem("fluid fills the whole cell; permeability is unbounded".into()));
    }
    let a = assemble(mask, problem.bc, &lay);
    let n = lay.nu + lay.np;
    let mut b = vec![0.0; n];
    let i = problem.direction;
    for &u in &lay.uidx[i] {
        if u != usize::MAX {
            b[u] = 1.0;
        }
    }
    let pre = Jacobi::from_matrix(&a);
    let groups = &lay.groups;
    let ng = lay.n_groups;
    let project = move |v: &mut [f64]| project_group_means(v, groups, ng);
    let mut x = vec![0.0; n];
    let stats = minres(&a, &b, &mut x, &pre, problem.solver, Some(&project))?;

    let inv_mu = 1.0 / problem.viscosity;
    let mut velocity = Vec::with_capacity(dim);
    for d in 0..dim {
        velocity.push(
            lay.uidx[d]
                .iter()
                .map(|&u| if u == usize::MAX { 0.0 } else { x[u] * inv_mu })
                .collect::<Vec<f64>>(),
        );
    }
    let pressure: Vec<f64> = lay
        .pidx
        .iter()
        .map(|&p| if p == usize::MAX { 0.0 } else { x[p] })
        .collect();
    let divergence_residual = divergence(mask, problem.fluid, &velocity)
        .into_iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(StokesCellSolution {
        provenance: StokesProvenance {
            grid: mask.grid().clone(),
            bc: problem.bc,
            fluid: problem.fluid,
            viscosity: problem.viscosity,
            tolerance: problem.solver.tolerance,
        },
        direction: i,
        velocity,
        pressure,
        iterations: stats.iterations,
        momentum_residual: stats.relative_residual,
        divergence_residual,
    })
}

/// Discrete divergence per voxel (zero outside the fluid).
pub fn divergence(mask: &CellMask, fluid: PhaseSelector, velocity: &[Vec<f64>]) -> Vec<f64> {
    let lat = mask.lattice();
    (0..lat.len())
        .map(|v| {
            if !fluid.contains(mask.phase(v)) {
                return 0.0;
            }
            let c = lat.coords(v);
            (0..mask.dim())
                .map(|d| {
                    let lo = lat.face_index(d, lat.voxel_face(c, d, -1));
                    let hi = lat.face_index(d, lat.voxel_face(c, d, 1));
                    (velocity[d][hi] - velocity[d][lo]) / lat.h(d)
                })
                .sum()
        })
        .collect()
}

/// Builds the permeability tensor from one solution per forcing direction:
/// `K[j][i]` is the cell average of component `j` of solution `i`.
pub fn assemble_permeability(solutions: &[StokesCellSolution], mask: &CellMask) -> Result<PermeabilityTensor> {
    let first = solutions
        .first()
        .ok_or_else(|| Error::InvalidArgument("no cell solutions given".into()))?;
    for s in solutions {
        if s.provenance != first.provenance {
            return Err(Error::MixedProvenance(format!(
                "{:?} vs {:?}",
                s.provenance, first.provenance
            )));
        }
    }
    if first.provenance.grid != *mask.grid() || first.provenance.bc.kind() != mask.kind() {
        return Err(Error::MixedProvenance("solutions were computed on a different mask".into()));
    }
    let m = first.provenance.bc.directions(mask.dim());
    let mut order: Vec<usize> = solutions.iter().map(|s| s.direction).collect();
    order.sort_unstable();
    if order != (0..m).collect::<Vec<_>>() {
        return Err(Error::MixedProvenance(format!(
            "expected one solution per direction 0..{m}, got directions {order:?}"
        )));
    }
    let lat = mask.lattice();
    let vol = lat.voxel_volume();
    let mut k = DMatrix::zeros(m, m);
    for s in solutions {
        for j in 0..m {
            // sequential sum in face order for reproducibility
            let sum: f64 = s.velocity[j].iter().sum();
            k[(j, s.direction)] = sum * vol;
        }
    }
    let mut iterations = vec![0; m];
    let mut residuals = vec![0.0; m];
    for s in solutions {
        iterations[s.direction] = s.iterations;
        residuals[s.direction] = s.momentum_residual;
    }
    Ok(PermeabilityTensor {
        k,
        provenance: first.provenance.clone(),
        iterations,
        residuals,
    })
}

/// Solves every forcing direction (in parallel) and assembles the tensor.
pub fn permeability(
    mask: &CellMask,
    fluid: PhaseSelector,
    viscosity: f64,
    solver: SolverOptions,
) -> Result<(PermeabilityTensor, Vec<StokesCellSolution>)> {
    let bc = StokesBc::for_kind(mask.kind());
    let m = bc.directions(mask.dim());
    let solutions = (0..m)
        .into_par_iter()
        .map(|i| {
            let p = StokesCellProblem::new(mask, fluid, i)
                .with_viscosity(viscosity)
                .with_solver(solver);
            solve_stokes_cell(&p)
        })
        .collect::<Result<Vec<_>>>()?;
    let k = assemble_permeability(&solutions, mask)?;
    Ok((k, solutions))
}

/// Velocity averaged to voxel centers, one vector per voxel, for output.
pub fn cell_centered_velocity(mask: &CellMask, sol: &StokesCellSolution) -> Vec<[f64; 3]> {
    let lat = mask.lattice();
    (0..lat.len())
        .map(|v| {
            let c = lat.coords(v);
            let mut out = [0.0; 3];
            for d in 0..mask.dim() {
                let lo = lat.face_index(d, lat.voxel_face(c, d, -1));
                let hi = lat.face_index(d, lat.voxel_face(c, d, 1));
                out[d] = 0.5 * (sol.velocity[d][lo] + sol.velocity[d][hi]);
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mask, presets, GridSpec};

    fn channel(n: usize) -> CellMask {
        build_mask(&presets::cell("fat-channel-2d").unwrap(), &GridSpec::uniform(2, n).unwrap()).unwrap()
    }

    #[test]
    fn poiseuille_profile() {
        let n = 64;
        let mask = channel(n);
        let p = StokesCellProblem::new(&mask, PhaseSelector::Artery, 0).with_solver(SolverOptions::with_tolerance(1e-10));
        let sol = solve_stokes_cell(&p).unwrap();
        let lat = mask.lattice();
        let mut err: f64 = 0.0;
        let umax = 0.5 * 0.25 * 0.25;
        for j in 0..n {
            let y = (j as f64 + 0.5) / n as f64;
            let s = y - 0.25;
            let exact = if (0.0..0.5).contains(&s) { 0.5 * s * (0.5 - s) } else { 0.0 };
            let u = sol.velocity[0][lat.face_index(0, [3, j, 0])];
            err = err.max((u - exact).abs());
        }
        assert!(err / umax < 0.02, "relative error {}", err / umax);
        assert!(sol.divergence_residual < 1e-8);
    }

    #[test]
    fn empty_fluid() {
        let mask = channel(16);
        let p = StokesCellProblem::new(&mask, PhaseSelector::Vein, 0);
        assert!(matches!(solve_stokes_cell(&p), Err(Error::NoFluid)));
    }

    #[test]
    fn isolated_inclusion_is_disconnected() {
        let mask = build_mask(&presets::cell("dns-square-2d").unwrap(), &GridSpec::uniform(2, 16).unwrap()).unwrap();
        let p = StokesCellProblem::new(&mask, PhaseSelector::Artery, 0);
        assert!(matches!(solve_stokes_cell(&p), Err(Error::DisconnectedFluid)));
    }

    #[test]
    fn mixed_provenance() {
        let mask = channel(16);
        let opts = SolverOptions::with_tolerance(1e-10);
        let a = solve_stokes_cell(&StokesCellProblem::new(&mask, PhaseSelector::Artery, 0).with_solver(opts)).unwrap();
        let b = solve_stokes_cell(
            &StokesCellProblem::new(&mask, PhaseSelector::Artery, 1)
                .with_solver(opts)
                .with_viscosity(2.0),
        )
        .unwrap();
        assert!(matches!(
            assemble_permeability(&[a, b], &mask),
            Err(Error::MixedProvenance(_))
        ));
    }

    #[test]
    fn case1_slip_bottom_layer() {
        // blood layer on the slip bottom under a no-slip tissue roof behaves
        // like half of a channel of twice the height
        let mask = build_mask(&presets::cell("skin1-layer-2d").unwrap(), &GridSpec::uniform(2, 64).unwrap()).unwrap();
        let (k, _) = permeability(&mask, PhaseSelector::Blood, 1.0, SolverOptions::with_tolerance(1e-10)).unwrap();
        assert_eq!(k.k.shape(), (1, 1));
        // full channel of height 1 has K = 1/12; the lower half carries half
        let exact = 1.0 / 24.0;
        assert!((k.k[(0, 0)] / exact - 1.0).abs() < 0.02, "{}", k.k[(0, 0)]);
    }
}
