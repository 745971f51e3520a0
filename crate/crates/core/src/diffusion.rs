//! Scalar corrector cell problems for the effective diffusion tensors.
//!
//! Cell-centered finite volumes on the selected phase with harmonic face
//! averages of a diagonal per-voxel coefficient. Faces toward other phases
//! and the horizontal boundaries of a case-1 cell carry no flux. The tensor
//! is assembled from face fluxes, which keeps the flux and energy forms equal
//! at convergence.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{components, CellKind, CellMask, GridSpec, PhaseSelector};
use crate::lattice::Lattice;
use crate::linalg::{cg, project_group_means, Jacobi, SolverOptions, TripletBuilder};

/// Diffusion coefficient on the cell, diagonal in the coordinate axes.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffusionCoefficient {
    Constant(f64),
    /// Per-voxel diagonal entries.
    Diagonal(Vec<[f64; 3]>),
}

impl DiffusionCoefficient {
    /// Isotropic coefficient sampled at voxel centers.
    pub fn from_fn(lattice: &Lattice, f: impl Fn(&[f64; 3]) -> f64) -> Self {
        DiffusionCoefficient::Diagonal(
            (0..lattice.len())
                .map(|v| {
                    let d = f(&lattice.center(lattice.coords(v)));
                    [d, d, d]
                })
                .collect(),
        )
    }

    /// Two equal slabs normal to `axis`: `low` for `y_axis < 1/2`, `high` above.
    pub fn laminate(lattice: &Lattice, axis: usize, low: f64, high: f64) -> Self {
        Self::from_fn(lattice, |x| if x[axis] < 0.5 { low } else { high })
    }

    #[inline]
    pub fn at(&self, voxel: usize, axis: usize) -> f64 {
        match self {
            DiffusionCoefficient::Constant(d) => *d,
            DiffusionCoefficient::Diagonal(v) => v[voxel][axis],
        }
    }

    /// Stable fingerprint used to detect mixed inputs.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |x: f64| {
            for b in x.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        match self {
            DiffusionCoefficient::Constant(d) => eat(*d),
            DiffusionCoefficient::Diagonal(v) => {
                for e in v {
                    e.iter().for_each(|&x| eat(x));
                }
            }
        }
        h
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionCellProblem<'a> {
    pub mask: &'a CellMask,
    pub phase: PhaseSelector,
    pub coefficient: &'a DiffusionCoefficient,
    /// Declared ellipticity bound.
    pub d0: f64,
    pub direction: usize,
    pub solver: SolverOptions,
}

impl<'a> DiffusionCellProblem<'a> {
    pub fn new(mask: &'a CellMask, phase: PhaseSelector, coefficient: &'a DiffusionCoefficient, direction: usize) -> Self {
        Self {
            mask,
            phase,
            coefficient,
            d0: 1e-12,
            direction,
            solver: SolverOptions::default(),
        }
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_bound(mut self, d0: f64) -> Self {
        self.d0 = d0;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionProvenance {
    pub grid: GridSpec,
    pub kind: CellKind,
    pub phase: PhaseSelector,
    pub coefficient: u64,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct CorrectorField {
    pub provenance: DiffusionProvenance,
    pub direction: usize,
    /// Corrector at voxel centers; zero outside the phase. Zero mean on every
    /// connected component of the phase.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct EffectiveDiffusionTensor {
    pub a: DMatrix<f64>,
    pub provenance: DiffusionProvenance,
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

/// Number of corrector directions for a cell family.
pub fn directions(kind: CellKind, dim: usize) -> usize {
    if kind == CellKind::SkinCase1 {
        dim - 1
    } else {
        dim
    }
}

/// Harmonic face coefficient for a face normal to `axis` if both neighbors
/// are in the phase, `None` for no-flux faces.
#[inline]
fn face_coefficient(
    mask: &CellMask,
    phase: PhaseSelector,
    coef: &DiffusionCoefficient,
    axis: usize,
    face: [usize; 3],
) -> Option<(usize, usize, f64)> {
    let lat = mask.lattice();
    let (l, r) = lat.face_voxels(axis, face);
    let (l, r) = (lat.index(l?), lat.index(r?));
    if !phase.contains(mask.phase(l)) || !phase.contains(mask.phase(r)) {
        return None;
    }
    let dl = coef.at(l, axis);
    let dr = coef.at(r, axis);
    Some((l, r, 2.0 * dl * dr / (dl + dr)))
}

fn check_ellipticity(mask: &CellMask, phase: PhaseSelector, coef: &DiffusionCoefficient, d0: f64) -> Result<()> {
    if let DiffusionCoefficient::Diagonal(v) = coef {
        if v.len() != mask.lattice().len() {
            return Err(Error::ShapeMismatch(format!(
                "{} coefficient entries for {} voxels",
                v.len(),
                mask.lattice().len()
            )));
        }
    }
    for voxel in 0..mask.lattice().len() {
        if !phase.contains(mask.phase(voxel)) {
            continue;
        }
        for d in 0..mask.dim() {
            let value = coef.at(voxel, d);
            if !(value >= d0) {
                return Err(Error::Ellipticity { voxel, value, bound: d0 });
            }
        }
    }
    Ok(())
}

pub fn solve_corrector(problem: &DiffusionCellProblem) -> Result<CorrectorField> {
    let mask = problem.mask;
    let lat = mask.lattice();
    let dim = mask.dim();
    let j = problem.direction;
    if j >= directions(mask.kind(), dim) {
        return Err(Error::InvalidArgument(format!(
            "corrector direction {j} out of range for a {dim}D {} cell",
            mask.kind().name()
        )));
    }
    if !(problem.d0 > 0.0) {
        return Err(Error::InvalidArgument(format!("ellipticity bound must be positive, got {}", problem.d0)));
    }
    if mask.count_selected(problem.phase) == 0 {
        return Err(Error::InvalidArgument(format!("phase `{}` is empty", problem.phase.name())));
    }
    check_ellipticity(mask, problem.phase, problem.coefficient, problem.d0)?;

    let mut unknown = vec![usize::MAX; lat.len()];
    let mut n = 0;
    for v in 0..lat.len() {
        if problem.phase.contains(mask.phase(v)) {
            unknown[v] = n;
            n += 1;
        }
    }
    let mut t = TripletBuilder::with_capacity(n, n, n * (2 * dim + 1));
    let mut b = vec![0.0; n];
    for axis in 0..dim {
        let h = lat.h(axis);
        for f in 0..lat.face_count(axis) {
            let c = lat.face_coords(axis, f);
            if let Some((l, r, df)) = face_coefficient(mask, problem.phase, problem.coefficient, axis, c) {
                let (il, ir) = (unknown[l], unknown[r]);
                let w = df / (h * h);
                t.push(il, il, w);
                t.push(ir, ir, w);
                t.push(il, ir, -w);
                t.push(ir, il, -w);
                if axis == j {
                    b[il] += df / h;
                    b[ir] -= df / h;
                }
            }
        }
    }
    let a = t.build();
    let (labels, ng) = components(mask, problem.phase);
    let groups: Vec<usize> = (0..lat.len())
        .filter(|&v| unknown[v] != usize::MAX)
        .map(|v| labels[v])
        .collect();
    let project = |v: &mut [f64]| project_group_means(v, &groups, ng);
    let mut x = vec![0.0; n];
    let stats = cg(&a, &b, &mut x, &Jacobi::from_matrix(&a), problem.solver, Some(&project))?;
    let values = unknown
        .iter()
        .map(|&u| if u == usize::MAX { 0.0 } else { x[u] })
        .collect();
    Ok(CorrectorField {
        provenance: DiffusionProvenance {
            grid: mask.grid().clone(),
            kind: mask.kind(),
            phase: problem.phase,
            coefficient: problem.coefficient.fingerprint(),
            tolerance: problem.solver.tolerance,
        },
        direction: j,
        values,
        iterations: stats.iterations,
        residual: stats.relative_residual,
    })
}

fn check_correctors(
    correctors: &[CorrectorField],
    mask: &CellMask,
    coef: &DiffusionCoefficient,
) -> Result<usize> {
    let first = correctors
        .first()
        .ok_or_else(|| Error::InvalidArgument("no correctors given".into()))?;
    for c in correctors {
        if c.provenance != first.provenance {
            return Err(Error::MixedProvenance(format!("{:?} vs {:?}", c.provenance, first.provenance)));
        }
    }
    if first.provenance.grid != *mask.grid()
        || first.provenance.kind != mask.kind()
        || first.provenance.coefficient != coef.fingerprint()
    {
        return Err(Error::MixedProvenance("correctors were computed for a different cell or coefficient".into()));
    }
    let m = directions(mask.kind(), mask.dim());
    let mut order: Vec<usize> = correctors.iter().map(|c| c.direction).collect();
    order.sort_unstable();
    if order != (0..m).collect::<Vec<_>>() {
        return Err(Error::MixedProvenance(format!(
            "expected one corrector per direction 0..{m}, got {order:?}"
        )));
    }
    Ok(m)
}

/// `A[i][j]`: cell average of the flux `e_i . D (grad w_j + e_j)`, summed over
/// faces normal to `i`.
pub fn assemble_effective_diffusion(
    correctors: &[CorrectorField],
    mask: &CellMask,
    coef: &DiffusionCoefficient,
) -> Result<EffectiveDiffusionTensor> {
    let m = check_correctors(correctors, mask, coef)?;
    let lat = mask.lattice();
    let phase = correctors[0].provenance.phase;
    let vol = lat.voxel_volume();
    let mut a = DMatrix::zeros(m, m);
    for w in correctors {
        let j = w.direction;
        for i in 0..m {
            let h = lat.h(i);
            let mut sum = 0.0;
            for f in 0..lat.face_count(i) {
                let c = lat.face_coords(i, f);
                if let Some((l, r, df)) = face_coefficient(mask, phase, coef, i, c) {
                    let g = (w.values[r] - w.values[l]) / h + if i == j { 1.0 } else { 0.0 };
                    sum += df * g;
                }
            }
            a[(i, j)] = sum * vol;
        }
    }
    let mut iterations = vec![0; m];
    let mut residuals = vec![0.0; m];
    for c in correctors {
        iterations[c.direction] = c.iterations;
        residuals[c.direction] = c.residual;
    }
    Ok(EffectiveDiffusionTensor {
        a,
        provenance: correctors[0].provenance.clone(),
        iterations,
        residuals,
    })
}

/// Cell-averaged energy `D (grad w_j + e_j) . (grad w_j + e_j)` of one corrector.
pub fn corrector_energy(corrector: &CorrectorField, mask: &CellMask, coef: &DiffusionCoefficient) -> f64 {
    let lat = mask.lattice();
    let phase = corrector.provenance.phase;
    let j = corrector.direction;
    let mut sum = 0.0;
    for axis in 0..mask.dim() {
        let h = lat.h(axis);
        for f in 0..lat.face_count(axis) {
            let c = lat.face_coords(axis, f);
            if let Some((l, r, df)) = face_coefficient(mask, phase, coef, axis, c) {
                let g = (corrector.values[r] - corrector.values[l]) / h + if axis == j { 1.0 } else { 0.0 };
                sum += df * g * g;
            }
        }
    }
    sum * lat.voxel_volume()
}

/// Largest net flux through a voxel of the phase, relative to the largest
/// face flux. Measures how well the discrete equations are satisfied.
pub fn flux_residual(corrector: &CorrectorField, mask: &CellMask, coef: &DiffusionCoefficient) -> f64 {
    let lat = mask.lattice();
    let phase = corrector.provenance.phase;
    let j = corrector.direction;
    let mut net = vec![0.0; lat.len()];
    let mut scale: f64 = 0.0;
    for axis in 0..mask.dim() {
        let h = lat.h(axis);
        for f in 0..lat.face_count(axis) {
            let c = lat.face_coords(axis, f);
            if let Some((l, r, df)) = face_coefficient(mask, phase, coef, axis, c) {
                let g = (corrector.values[r] - corrector.values[l]) / h + if axis == j { 1.0 } else { 0.0 };
                let q = df * g;
                net[l] += q;
                net[r] -= q;
                scale = scale.max(q.abs());
            }
        }
    }
    let worst = net.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        worst
    } else {
        worst / scale
    }
}

/// Solves every direction (in parallel) and assembles the tensor.
pub fn effective_diffusion(
    mask: &CellMask,
    phase: PhaseSelector,
    coef: &DiffusionCoefficient,
    solver: SolverOptions,
) -> Result<(EffectiveDiffusionTensor, Vec<CorrectorField>)> {
    let m = directions(mask.kind(), mask.dim());
    let correctors = (0..m)
        .into_par_iter()
        .map(|j| solve_corrector(&DiffusionCellProblem::new(mask, phase, coef, j).with_solver(solver)))
        .collect::<Result<Vec<_>>>()?;
    let a = assemble_effective_diffusion(&correctors, mask, coef)?;
    Ok((a, correctors))
}

/// Phase means of a decay rate at a list of time samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseAverages {
    pub times: Vec<f64>,
    pub means: Vec<f64>,
}

impl PhaseAverages {
    pub fn constant(value: f64) -> Self {
        Self {
            times: vec![0.0],
            means: vec![value],
        }
    }

    /// Piecewise-linear interpolation, constant beyond the first and last
    /// samples.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if n == 0 {
            return 0.0;
        }
        if t <= self.times[0] {
            return self.means[0];
        }
        if t >= self.times[n - 1] {
            return self.means[n - 1];
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        (1.0 - w) * self.means[k] + w * self.means[k + 1]
    }
}

/// Midpoint-rule mean of `d(x, t)` over the selected phase at each sample
/// time. An empty phase has mean zero.
pub fn average_decay(
    mask: &CellMask,
    phase: PhaseSelector,
    d: impl Fn(&[f64; 3], f64) -> f64,
    times: &[f64],
) -> PhaseAverages {
    let lat = mask.lattice();
    let voxels: Vec<usize> = (0..lat.len()).filter(|&v| phase.contains(mask.phase(v))).collect();
    let means = times
        .iter()
        .map(|&t| {
            if voxels.is_empty() {
                return 0.0;
            }
            let s: f64 = voxels.iter().map(|&v| d(&lat.center(lat.coords(v)), t)).sum();
            s / voxels.len() as f64
        })
        .collect();
    PhaseAverages {
        times: times.to_vec(),
        means,
    }
}
