//! Resolved micro-scale reference for the diffusion-exchange system in 2D.
//!
//! The domain is the periodic box `[0, 1] x [0, M/N]` tiled by `N x M`
//! copies of a unit cell of size `eps = 1/N`, each sampled with `p x p`
//! voxels. Every voxel carries the concentration of its own phase. Blood
//! and tissue voxels sharing a face exchange `eps * lambda * (c_l - c_s)`
//! per unit face length; faces between different blood phases are closed.
//!
//! The homogenized comparison solution is computed mode by mode for data
//! of the form `mean + amp * cos(kx x) cos(ky y)`.

use nalgebra::{DMatrix, DVector};

use crate::diffusion::{effective_diffusion, DiffusionCoefficient};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::{build_mask, measure_cell, CellKind, CellMask, GridSpec, Phase, PhaseSelector, UnitCellSpec, VesselPhase};
use crate::linalg::{bicgstab, cg, CsrMatrix, Jacobi, SolverOptions, TripletBuilder};

/// Prescribed face fluxes (velocity times face length) on the micro grid,
/// indexed by the low voxel of each face with periodic wrapping.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroVelocity {
    pub flux: [Vec<f64>; 2],
}

#[derive(Debug, Clone)]
pub struct MicroProblem {
    pub cell: UnitCellSpec,
    /// Cells across the unit length; `eps = 1 / n`.
    pub n: usize,
    /// Cells along the second axis.
    pub m: usize,
    pub voxels_per_cell: usize,
    /// Diffusivity of artery, vein and tissue.
    pub diffusion: [f64; 3],
    /// Wall permeability of artery and vein.
    pub lambda: [f64; 2],
    pub decay: f64,
    /// Initial data of artery, vein and tissue.
    pub initial: [Field; 3],
    pub velocity: Option<MicroVelocity>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroStepper {
    pub dt: f64,
    pub final_time: f64,
    pub output_every: usize,
    pub solver: SolverOptions,
}

impl MicroStepper {
    pub fn new(dt: f64, final_time: f64) -> Self {
        Self {
            dt,
            final_time,
            output_every: 1,
            solver: SolverOptions::with_tolerance(1e-12),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MicroSolution {
    pub n: usize,
    pub m: usize,
    pub voxels_per_cell: usize,
    /// Phase of every voxel, `x` fastest.
    pub phases: Vec<Phase>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl MicroSolution {
    pub fn shape(&self) -> [usize; 2] {
        [self.n * self.voxels_per_cell, self.m * self.voxels_per_cell]
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n * self.voxels_per_cell) as f64
    }

    /// Largest `|c_blood - c_tissue|` over the blood/tissue faces.
    pub fn interface_gap(&self, state: usize) -> f64 {
        let [nx, ny] = self.shape();
        let c = &self.states[state];
        let mut gap = 0.0_f64;
        for iy in 0..ny {
            for ix in 0..nx {
                let i = ix + nx * iy;
                for j in [(ix + 1) % nx + nx * iy, ix + nx * ((iy + 1) % ny)] {
                    let (pi, pj) = (self.phases[i], self.phases[j]);
                    if (pi == Phase::Tissue) != (pj == Phase::Tissue) {
                        gap = gap.max((c[i] - c[j]).abs());
                    }
                }
            }
        }
        gap
    }

    /// Total mass `sum h^2 c`.
    pub fn mass(&self, state: usize) -> f64 {
        let h2 = self.h() * self.h();
        self.states[state].iter().sum::<f64>() * h2
    }
}

/// One value per cell, `x` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseField {
    pub n: usize,
    pub m: usize,
    pub values: Vec<f64>,
}

impl CoarseField {
    /// Samples `f` at the cell centers.
    pub fn from_fn(n: usize, m: usize, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        let eps = 1.0 / n as f64;
        let mut values = Vec::with_capacity(n * m);
        for j in 0..m {
            for i in 0..n {
                values.push(f(&[(i as f64 + 0.5) * eps, (j as f64 + 0.5) * eps, 0.0]));
            }
        }
        Self { n, m, values }
    }
}

/// Discrepancy between two coarse fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    /// `sqrt(sum eps^2 (a - b)^2)`
    pub l2: f64,
    pub linf: f64,
}

struct MicroGrid {
    nx: usize,
    ny: usize,
    h: f64,
    phases: Vec<Phase>,
}

impl MicroGrid {
    fn new(prob: &MicroProblem) -> Result<(Self, CellMask)> {
        if prob.cell.dim != 2 {
            return Err(Error::InvalidArgument("the micro solver is two-dimensional".into()));
        }
        if prob.cell.kind != CellKind::Fat {
            return Err(Error::InvalidArgument("the micro solver tiles fat-layer cells".into()));
        }
        if prob.n < 2 || prob.m < 1 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 cells across, got {} x {}",
                prob.n, prob.m
            )));
        }
        let p = prob.voxels_per_cell;
        let mask = build_mask(&prob.cell, &GridSpec::uniform(2, p)?)?;
        let (nx, ny) = (prob.n * p, prob.m * p);
        let mut phases = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                phases.push(mask.phase_at([ix % p, iy % p, 0]));
            }
        }
        Ok((
            Self {
                nx,
                ny,
                h: 1.0 / nx as f64,
                phases,
            },
            mask,
        ))
    }

    fn len(&self) -> usize {
        self.nx * self.ny
    }

    fn neighbor(&self, i: usize, axis: usize) -> usize {
        let (ix, iy) = (i % self.nx, i / self.nx);
        if axis == 0 {
            (ix + 1) % self.nx + self.nx * iy
        } else {
            ix + self.nx * ((iy + 1) % self.ny)
        }
    }

    fn center(&self, i: usize) -> [f64; 3] {
        let (ix, iy) = (i % self.nx, i / self.nx);
        [(ix as f64 + 0.5) * self.h, (iy as f64 + 0.5) * self.h, 0.0]
    }
}

fn validate_velocity(grid: &MicroGrid, v: &MicroVelocity) -> Result<()> {
    if v.flux.iter().any(|f| f.len() != grid.len()) {
        return Err(Error::ShapeMismatch("velocity does not match the micro grid".into()));
    }
    let scale = v.flux.iter().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));
    let mut div = vec![0.0; grid.len()];
    for a in 0..2 {
        for i in 0..grid.len() {
            let j = grid.neighbor(i, a);
            let f = v.flux[a][i];
            if f != 0.0 && grid.phases[i] != grid.phases[j] {
                return Err(Error::InvalidArgument(format!(
                    "prescribed velocity crosses a phase boundary at voxel {i}"
                )));
            }
            div[i] += f;
            div[j] -= f;
        }
    }
    let worst = div.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if worst > 1e-12 * scale.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "prescribed velocity is not divergence free (max {worst:e})"
        )));
    }
    Ok(())
}

/// Implicit Euler finite-volume solution of the resolved problem.
pub fn solve_micro(prob: &MicroProblem, cfg: &MicroStepper) -> Result<MicroSolution> {
    if !(cfg.dt > 0.0) || !(cfg.final_time >= 0.0) || cfg.output_every == 0 {
        return Err(Error::InvalidArgument("invalid time stepping parameters".into()));
    }
    if prob.diffusion.iter().chain(&prob.lambda).any(|v| !(*v >= 0.0)) || !(prob.decay >= 0.0) {
        return Err(Error::InvalidArgument("coefficients must be nonnegative".into()));
    }
    let (grid, _) = MicroGrid::new(prob)?;
    if let Some(v) = &prob.velocity {
        validate_velocity(&grid, v)?;
    }
    let eps = 1.0 / prob.n as f64;
    let h = grid.h;
    let n = grid.len();
    let mut t = TripletBuilder::with_capacity(n, n, 5 * n);
    for i in 0..n {
        let pi = grid.phases[i];
        for a in 0..2 {
            let j = grid.neighbor(i, a);
            let pj = grid.phases[j];
            // face length h over distance h
            let k = if pi == pj {
                prob.diffusion[pi as usize]
            } else if pi == Phase::Tissue || pj == Phase::Tissue {
                let blood = if pi == Phase::Tissue { pj } else { pi };
                eps * prob.lambda[blood as usize] * h
            } else {
                0.0
            };
            if k != 0.0 {
                t.push(i, i, k);
                t.push(j, j, k);
                t.push(i, j, -k);
                t.push(j, i, -k);
            }
            if let Some(v) = &prob.velocity {
                let f = v.flux[a][i];
                if f != 0.0 {
                    let (from, to, q) = if f > 0.0 { (i, j, f) } else { (j, i, -f) };
                    t.push(from, from, q);
                    t.push(to, from, -q);
                }
            }
        }
        if pi == Phase::Tissue && prob.decay > 0.0 {
            t.push(i, i, prob.decay * h * h);
        }
    }
    let mass = h * h / cfg.dt;
    for i in 0..n {
        t.push(i, i, mass);
    }
    let a: CsrMatrix = t.build();
    let precond = Jacobi::from_matrix(&a);

    let mut x: Vec<f64> = (0..n)
        .map(|i| prob.initial[grid.phases[i] as usize].eval(&grid.center(i)))
        .collect();
    if x.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidArgument("initial data must be nonnegative".into()));
    }
    let steps = (cfg.final_time / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    let mut times = vec![0.0];
    let mut states = vec![x.clone()];
    let mut b = vec![0.0; n];
    for k in 1..=steps {
        for (bi, xi) in b.iter_mut().zip(&x) {
            *bi = mass * xi;
        }
        if prob.velocity.is_some() {
            bicgstab(&a, &b, &mut x, &precond, cfg.solver)
        } else {
            cg(&a, &b, &mut x, &precond, cfg.solver, None)
        }
        .map_err(|e| e.context("micro solve"))?;
        if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| **v < -1e-12) {
            return Err(Error::NegativeConcentration {
                field: "micro",
                node: i,
                value: *v,
            });
        }
        if k % cfg.output_every == 0 || k == steps {
            times.push(k as f64 * cfg.dt);
            states.push(x.clone());
        }
    }
    Ok(MicroSolution {
        n: prob.n,
        m: prob.m,
        voxels_per_cell: prob.voxels_per_cell,
        phases: grid.phases,
        times,
        states,
    })
}

/// Per-cell mean of the selected phase. Cells without the phase get 0.
pub fn cell_average(sol: &MicroSolution, state: usize, phase: PhaseSelector) -> CoarseField {
    let p = sol.voxels_per_cell;
    let [nx, _] = sol.shape();
    let c = &sol.states[state];
    let mut values = vec![0.0; sol.n * sol.m];
    for cj in 0..sol.m {
        for ci in 0..sol.n {
            let mut sum = 0.0;
            let mut count = 0usize;
            for vy in 0..p {
                for vx in 0..p {
                    let i = (ci * p + vx) + nx * (cj * p + vy);
                    if phase.contains(sol.phases[i]) {
                        sum += c[i];
                        count += 1;
                    }
                }
            }
            values[ci + sol.n * cj] = if count > 0 { sum / count as f64 } else { 0.0 };
        }
    }
    CoarseField {
        n: sol.n,
        m: sol.m,
        values,
    }
}

pub fn compare_with_macro(coarse: &CoarseField, reference: &CoarseField) -> Result<ErrorReport> {
    if coarse.n != reference.n || coarse.m != reference.m || coarse.values.len() != reference.values.len() {
        return Err(Error::ShapeMismatch(format!(
            "coarse fields are {}x{} and {}x{}",
            coarse.n, coarse.m, reference.n, reference.m
        )));
    }
    let eps = 1.0 / coarse.n as f64;
    let mut l2 = 0.0;
    let mut linf = 0.0_f64;
    for (a, b) in coarse.values.iter().zip(&reference.values) {
        let d = (a - b).abs();
        l2 += eps * eps * d * d;
        linf = linf.max(d);
    }
    Ok(ErrorReport { l2: l2.sqrt(), linf })
}

/// Homogenized coefficients of the diffusion-exchange system.
#[derive(Debug, Clone)]
pub struct HomogenizedCoefficients {
    /// Phases present, with their fractions, tensors and wall densities.
    pub phases: Vec<Phase>,
    pub theta: Vec<f64>,
    pub a: Vec<DMatrix<f64>>,
    /// `lambda * gamma` per blood phase (0 for tissue).
    pub exchange: Vec<f64>,
    pub decay: f64,
}

impl HomogenizedCoefficients {
    /// Cell problems solved on the same voxelization as the micro grid;
    /// wall densities from the staircase interface length.
    pub fn from_problem(prob: &MicroProblem, solver: SolverOptions) -> Result<Self> {
        let (_, mask) = MicroGrid::new(prob)?;
        let measures = measure_cell(&mask);
        let mut out = Self {
            phases: Vec::new(),
            theta: Vec::new(),
            a: Vec::new(),
            exchange: Vec::new(),
            decay: prob.decay,
        };
        for phase in [Phase::Artery, Phase::Vein, Phase::Tissue] {
            let theta = measures.theta(phase);
            if theta == 0.0 {
                continue;
            }
            let d = prob.diffusion[phase as usize];
            let (a, _) = effective_diffusion(&mask, phase.into(), &DiffusionCoefficient::Constant(d), solver)?;
            let exchange = match phase {
                Phase::Artery => prob.lambda[0] * measures.staircase(VesselPhase::Artery),
                Phase::Vein => prob.lambda[1] * measures.staircase(VesselPhase::Vein),
                Phase::Tissue => 0.0,
            };
            out.phases.push(phase);
            out.theta.push(theta);
            out.a.push(a.a);
            out.exchange.push(exchange);
        }
        Ok(out)
    }

    pub fn scaled_tensors(mut self, s: f64) -> Self {
        for a in &mut self.a {
            *a *= s;
        }
        self
    }
}

/// Initial data `mean + amp cos(kx x) cos(ky y)` shared by all phases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineMode {
    pub mean: f64,
    pub amp: f64,
    pub k: [f64; 2],
}

impl CosineMode {
    pub fn field(&self) -> Field {
        let m = *self;
        Field::function(move |x| m.mean + m.amp * (m.k[0] * x[0]).cos() * (m.k[1] * x[1]).cos())
    }
}

/// Homogenized solution for cosine-mode data, advanced with the same
/// implicit Euler steps as the micro solver. Returns, per output time and
/// phase, the coefficients of `1`, `cos cos` and `sin sin`.
pub fn modal_reference(
    coef: &HomogenizedCoefficients,
    mode: CosineMode,
    cfg: &MicroStepper,
) -> Vec<Vec<[f64; 3]>> {
    let np = coef.phases.len();
    let tissue = coef.phases.iter().position(|&p| p == Phase::Tissue);
    let [kx, ky] = mode.k;
    // unknowns: phase-major (mean, cc, ss)
    let n = 3 * np;
    let mut op = DMatrix::<f64>::zeros(n, n);
    let mut mass = DVector::<f64>::zeros(n);
    for (p, a) in coef.a.iter().enumerate() {
        let diag = a[(0, 0)] * kx * kx + a[(1, 1)] * ky * ky;
        let cross = -2.0 * a[(0, 1)] * kx * ky;
        op[(3 * p + 1, 3 * p + 1)] += diag;
        op[(3 * p + 2, 3 * p + 2)] += diag;
        op[(3 * p + 1, 3 * p + 2)] += cross;
        op[(3 * p + 2, 3 * p + 1)] += cross;
        for q in 0..3 {
            mass[3 * p + q] = coef.theta[p];
        }
    }
    if let Some(s) = tissue {
        for (p, &e) in coef.exchange.iter().enumerate() {
            if p == s || e == 0.0 {
                continue;
            }
            for q in 0..3 {
                let (i, j) = (3 * p + q, 3 * s + q);
                op[(i, i)] += e;
                op[(j, j)] += e;
                op[(i, j)] -= e;
                op[(j, i)] -= e;
            }
        }
        for q in 0..3 {
            op[(3 * s + q, 3 * s + q)] += coef.theta[s] * coef.decay;
        }
    }
    let mut system = op.clone();
    for i in 0..n {
        system[(i, i)] += mass[i] / cfg.dt;
    }
    let lu = system.lu();
    let mut x = DVector::<f64>::zeros(n);
    for p in 0..np {
        x[3 * p] = mode.mean;
        x[3 * p + 1] = mode.amp;
    }
    let collect = |x: &DVector<f64>| (0..np).map(|p| [x[3 * p], x[3 * p + 1], x[3 * p + 2]]).collect::<Vec<_>>();
    let steps = (cfg.final_time / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    let mut out = vec![collect(&x)];
    for k in 1..=steps {
        let rhs = x.component_mul(&mass) / cfg.dt;
        x = lu.solve(&rhs).expect("modal system is nonsingular");
        if k % cfg.output_every == 0 || k == steps {
            out.push(collect(&x));
        }
    }
    out
}

/// Cell averages of a modal reference.
pub fn modal_coarse(n: usize, m: usize, mode: CosineMode, coeffs: [f64; 3]) -> CoarseField {
    let [kx, ky] = mode.k;
    let half = 0.5 / n as f64;
    let sinc = |k: f64| if k == 0.0 { 1.0 } else { (k * half).sin() / (k * half) };
    let s = sinc(kx) * sinc(ky);
    CoarseField::from_fn(n, m, |x| {
        coeffs[0] + s * (coeffs[1] * (kx * x[0]).cos() * (ky * x[1]).cos() + coeffs[2] * (kx * x[0]).sin() * (ky * x[1]).sin())
    })
}

/// Settings of an epsilon sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub cell: UnitCellSpec,
    pub ns: Vec<usize>,
    pub voxels_per_cell: usize,
    pub diffusion: [f64; 3],
    pub lambda: [f64; 2],
    pub decay: f64,
    pub mode: CosineMode,
    pub stepper: MicroStepper,
    /// Factor applied to the effective tensors of the negative control.
    pub control_scale: f64,
    pub rate_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub eps: f64,
    /// Largest L2 error over the output times.
    pub l2: f64,
    pub linf: f64,
    pub l2_control: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Observed rates between consecutive rows.
    pub rates: Vec<f64>,
    pub monotone: bool,
    pub control_decreasing: bool,
    pub pass: bool,
}

/// Runs the micro solver for every `n` and compares cell averages of all
/// phases with the homogenized solution.
pub fn epsilon_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    let mut rows = Vec::new();
    for &n in &cfg.ns {
        let init = cfg.mode.field();
        let prob = MicroProblem {
            cell: cfg.cell.clone(),
            n,
            m: n,
            voxels_per_cell: cfg.voxels_per_cell,
            diffusion: cfg.diffusion,
            lambda: cfg.lambda,
            decay: cfg.decay,
            initial: [init.clone(), init.clone(), init],
            velocity: None,
        };
        let sol = solve_micro(&prob, &cfg.stepper)?;
        let coef = HomogenizedCoefficients::from_problem(&prob, SolverOptions::with_tolerance(1e-12))?;
        let control = coef.clone().scaled_tensors(cfg.control_scale);
        let reference = modal_reference(&coef, cfg.mode, &cfg.stepper);
        let wrong = modal_reference(&control, cfg.mode, &cfg.stepper);
        let (mut l2, mut linf, mut l2c) = (0.0_f64, 0.0_f64, 0.0_f64);
        for s in 0..sol.states.len() {
            let (mut e2, mut c2) = (0.0, 0.0);
            for (p, &phase) in coef.phases.iter().enumerate() {
                let avg = cell_average(&sol, s, phase.into());
                let r = compare_with_macro(&avg, &modal_coarse(n, n, cfg.mode, reference[s][p]))?;
                let rc = compare_with_macro(&avg, &modal_coarse(n, n, cfg.mode, wrong[s][p]))?;
                e2 += r.l2 * r.l2;
                c2 += rc.l2 * rc.l2;
                linf = linf.max(r.linf);
            }
            l2 = l2.max(e2.sqrt());
            l2c = l2c.max(c2.sqrt());
        }
        rows.push(SweepRow {
            n,
            eps: 1.0 / n as f64,
            l2,
            linf,
            l2_control: l2c,
        });
    }
    let rates: Vec<f64> = rows
        .windows(2)
        .map(|w| (w[0].l2 / w[1].l2).ln() / (w[0].eps / w[1].eps).ln())
        .collect();
    let monotone = rows.windows(2).all(|w| w[1].l2 < w[0].l2);
    let control_decreasing = rows.windows(2).any(|w| w[1].l2_control < 0.9 * w[0].l2_control);
    let pass = monotone && rates.iter().all(|&r| r >= cfg.rate_threshold) && !control_decreasing;
    Ok(SweepReport {
        rows,
        rates,
        monotone,
        control_decreasing,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::presets;
    use std::f64::consts::PI;

    fn empty_cell() -> UnitCellSpec {
        UnitCellSpec::new(CellKind::Fat, 2, vec![])
    }

    fn problem(cell: UnitCellSpec, n: usize, init: Field) -> MicroProblem {
        MicroProblem {
            cell,
            n,
            m: n,
            voxels_per_cell: 8,
            diffusion: [1.0, 1.0, 1.0],
            lambda: [1.0, 1.0],
            decay: 0.0,
            initial: [init.clone(), init.clone(), init],
            velocity: None,
        }
    }

    #[test]
    fn pure_tissue_matches_heat_equation() {
        let mode = CosineMode {
            mean: 1.0,
            amp: 0.5,
            k: [2.0 * PI, 2.0 * PI],
        };
        let prob = problem(empty_cell(), 4, mode.field());
        let cfg = MicroStepper::new(1e-4, 0.02);
        let sol = solve_micro(&prob, &cfg).unwrap();
        let last = sol.states.len() - 1;
        let t = sol.times[last];
        let h = sol.h();
        // the discrete Laplacian acts on the mode with its exact symbol
        let lam = 2.0 * 4.0 / (h * h) * (PI * h).sin().powi(2);
        let amp = 0.5 * (1.0 + cfg.dt * lam).powf(-t / cfg.dt);
        let [nx, _] = sol.shape();
        for (i, c) in sol.states[last].iter().enumerate() {
            let x = [((i % nx) as f64 + 0.5) * h, ((i / nx) as f64 + 0.5) * h];
            let e = 1.0 + amp * (2.0 * PI * x[0]).cos() * (2.0 * PI * x[1]).cos();
            assert!((c - e).abs() < 1e-9);
        }
        // and the continuous heat equation to discretization error
        let cont = 0.5 * (-8.0 * PI * PI * t).exp();
        assert!((amp - cont).abs() < 0.02 * cont);
    }

    #[test]
    fn conserves_mass_without_decay() {
        let prob = problem(presets::cell(presets::DNS).unwrap(), 2, Field::function(|x| 1.0 + x[0]));
        let sol = solve_micro(&prob, &MicroStepper::new(0.01, 0.1)).unwrap();
        let m0 = sol.mass(0);
        for s in 1..sol.states.len() {
            assert!((sol.mass(s) - m0).abs() <= 1e-10 * m0);
        }
    }

    #[test]
    fn stronger_exchange_closes_the_gap() {
        let mut gaps = Vec::new();
        for lambda in [1.0, 10.0, 100.0] {
            let mut prob = problem(
                presets::cell(presets::DNS).unwrap(),
                2,
                Field::function(|x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos()),
            );
            prob.initial[0] = 2.0.into();
            prob.lambda = [lambda, lambda];
            let sol = solve_micro(&prob, &MicroStepper::new(0.01, 0.1)).unwrap();
            gaps.push(sol.interface_gap(sol.states.len() - 1));
        }
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }

    #[test]
    fn cell_average_identities() {
        let prob = problem(presets::cell(presets::DNS).unwrap(), 4, 3.0.into());
        let sol = solve_micro(&prob, &MicroStepper::new(0.1, 0.0)).unwrap();
        let avg = cell_average(&sol, 0, PhaseSelector::All);
        assert!(avg.values.iter().all(|v| (v - 3.0).abs() < 1e-15));
        // indicator of the artery phase averages to its volume fraction
        let mut ind = sol.clone();
        ind.states[0] = sol.phases.iter().map(|&p| if p == Phase::Artery { 1.0 } else { 0.0 }).collect();
        let avg = cell_average(&ind, 0, PhaseSelector::All);
        assert!(avg.values.iter().all(|v| (v - 0.25).abs() < 1e-15));
        // a linear field averages to the cell-center value
        let lin = problem(presets::cell(presets::DNS).unwrap(), 4, Field::function(|x| 1.0 + 2.0 * x[0] + x[1]));
        let sol = solve_micro(&lin, &MicroStepper::new(0.1, 0.0)).unwrap();
        let avg = cell_average(&sol, 0, PhaseSelector::All);
        let centers = CoarseField::from_fn(4, 4, |x| 1.0 + 2.0 * x[0] + x[1]);
        let r = compare_with_macro(&avg, &centers).unwrap();
        assert!(r.linf < 1e-12);
        assert_eq!(compare_with_macro(&centers, &centers).unwrap().l2, 0.0);
        let other = CoarseField::from_fn(2, 2, |_| 0.0);
        assert!(matches!(compare_with_macro(&centers, &other), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn velocity_must_be_divergence_free() {
        let mut prob = problem(empty_cell(), 2, 1.0.into());
        let n = 16 * 16;
        prob.velocity = Some(MicroVelocity {
            flux: [vec![0.1; n], vec![0.0; n]],
        });
        let sol = solve_micro(&prob, &MicroStepper::new(0.1, 0.3)).unwrap();
        assert!(sol.states.last().unwrap().iter().all(|c| (c - 1.0).abs() < 1e-10));
        let mut bad = vec![0.0; n];
        bad[3] = 1.0;
        prob.velocity = Some(MicroVelocity {
            flux: [bad, vec![0.0; n]],
        });
        assert!(solve_micro(&prob, &MicroStepper::new(0.1, 0.3)).is_err());
    }
}
