use rayon::prelude::*;

use super::{CellKind, FacetLabel, GridSpec, Phase, PhaseSelector, UnitCellSpec, VesselPhase};
use crate::error::{Error, Result};
use crate::lattice::Lattice;

/// Voxelized unit cell with phase labels and classified facets.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMask {
    spec: UnitCellSpec,
    grid: GridSpec,
    lattice: Lattice,
    phases: Vec<Phase>,
    facets: Vec<Vec<FacetLabel>>,
}

/// Displacement from `center` to `x`, reduced to the minimum image on
/// periodic axes.
#[inline]
fn displacement(x: &[f64; 3], center: &[f64], dim: usize, periodic: &[bool; 3]) -> [f64; 3] {
    let mut d = [0.0; 3];
    for k in 0..dim {
        let mut v = x[k] - center[k];
        if periodic[k] {
            v -= v.round();
        }
        d[k] = v;
    }
    d
}

/// Signed distance to the union of the primitives of one phase. Positive
/// infinity when the phase has no primitives.
pub(crate) fn phase_sdf(spec: &UnitCellSpec, periodic: &[bool; 3], x: &[f64; 3], phase: VesselPhase) -> f64 {
    let mut best = f64::INFINITY;
    for p in spec.primitives.iter().filter(|p| p.phase == phase) {
        let d = displacement(x, p.shape.center(), spec.dim, periodic);
        best = best.min(p.shape.sdf(&d, spec.dim, periodic));
    }
    best
}

fn periodic_array(spec: &UnitCellSpec) -> [bool; 3] {
    let mut p = [true; 3];
    for (d, v) in spec.periodic_axes().into_iter().enumerate() {
        p[d] = v;
    }
    p
}

/// Voxelizes `spec` on `grid` by center-point sampling and classifies every
/// facet.
pub fn build_mask(spec: &UnitCellSpec, grid: &GridSpec) -> Result<CellMask> {
    spec.validate()?;
    if grid.dim() != spec.dim {
        return Err(Error::Geometry(format!(
            "grid has {} axes but the cell is {}-dimensional",
            grid.dim(),
            spec.dim
        )));
    }
    let periodic_vec = spec.periodic_axes();
    let periodic = periodic_array(spec);
    let lattice = Lattice::new(&grid.resolution, &periodic_vec);
    let hmax = grid.spacing().into_iter().fold(0.0, f64::max);
    for (k, p) in spec.primitives.iter().enumerate() {
        for d in 0..spec.dim {
            if let Some(t) = p.shape.thickness(d, periodic[d]) {
                if t < 2.0 * hmax - 1e-12 {
                    return Err(Error::Resolution(format!(
                        "primitive {k} has thickness {t} along axis {d}, below 2h = {}",
                        2.0 * hmax
                    )));
                }
            }
        }
    }

    let sampled: Vec<(bool, bool)> = (0..lattice.len())
        .into_par_iter()
        .map(|idx| {
            let x = lattice.center(lattice.coords(idx));
            (
                phase_sdf(spec, &periodic, &x, VesselPhase::Artery) < 0.0,
                phase_sdf(spec, &periodic, &x, VesselPhase::Vein) < 0.0,
            )
        })
        .collect();
    let mut phases = Vec::with_capacity(lattice.len());
    for (idx, &(a, v)) in sampled.iter().enumerate() {
        phases.push(match (a, v) {
            (true, true) => {
                let x = lattice.center(lattice.coords(idx));
                return Err(Error::Overlap(format!(
                    "voxel {:?} at {:?} lies inside both an artery and a vein primitive",
                    lattice.coords(idx),
                    &x[..spec.dim]
                )));
            }
            (true, false) => Phase::Artery,
            (false, true) => Phase::Vein,
            (false, false) => Phase::Tissue,
        });
    }

    let mut facets = Vec::with_capacity(spec.dim);
    for axis in 0..spec.dim {
        let mut labels = Vec::with_capacity(lattice.face_count(axis));
        for f in 0..lattice.face_count(axis) {
            let c = lattice.face_coords(axis, f);
            let (lo, hi) = lattice.face_voxels(axis, c);
            let label = match (lo, hi) {
                (None, _) => FacetLabel::Bottom,
                (_, None) => FacetLabel::Top,
                (Some(l), Some(r)) => {
                    let pl = phases[lattice.index(l)];
                    let pr = phases[lattice.index(r)];
                    classify(spec.kind, pl, pr, c[axis] == 0).ok_or_else(|| {
                        Error::Overlap(format!(
                            "artery voxel {l:?} and vein voxel {r:?} share a facet in a fat cell"
                        ))
                    })?
                }
            };
            labels.push(label);
        }
        facets.push(labels);
    }

    Ok(CellMask {
        spec: spec.clone(),
        grid: grid.clone(),
        lattice,
        phases,
        facets,
    })
}

fn classify(kind: CellKind, a: Phase, b: Phase, seam: bool) -> Option<FacetLabel> {
    use Phase::*;
    let skin = kind.is_skin();
    Some(match (a, b) {
        (x, y) if x == y => {
            if seam {
                FacetLabel::Periodic
            } else {
                FacetLabel::Interior
            }
        }
        (Artery, Tissue) | (Tissue, Artery) => {
            if skin {
                FacetLabel::RArtery
            } else {
                FacetLabel::GammaArtery
            }
        }
        (Vein, Tissue) | (Tissue, Vein) => {
            if skin {
                FacetLabel::RVein
            } else {
                FacetLabel::GammaVein
            }
        }
        _ => {
            if skin {
                FacetLabel::Sigma
            } else {
                return None;
            }
        }
    })
}

impl CellMask {
    /// Builds a mask directly from phase labels. Facets are classified as in
    /// [`build_mask`]; the stored spec has no primitives.
    pub fn from_phases(kind: CellKind, grid: &GridSpec, phases: Vec<Phase>) -> Result<Self> {
        let dim = grid.dim();
        let spec = UnitCellSpec::new(kind, dim, Vec::new());
        let lattice = Lattice::new(&grid.resolution, &spec.periodic_axes());
        if phases.len() != lattice.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} phase labels for {} voxels",
                phases.len(),
                lattice.len()
            )));
        }
        let mut mask = build_mask(&spec, grid)?;
        mask.phases = phases;
        for axis in 0..dim {
            for f in 0..lattice.face_count(axis) {
                let c = lattice.face_coords(axis, f);
                if let (Some(l), Some(r)) = lattice.face_voxels(axis, c) {
                    let pl = mask.phases[lattice.index(l)];
                    let pr = mask.phases[lattice.index(r)];
                    mask.facets[axis][f] = classify(kind, pl, pr, c[axis] == 0).ok_or_else(|| {
                        Error::Overlap(format!("artery voxel {l:?} and vein voxel {r:?} share a facet"))
                    })?;
                }
            }
        }
        Ok(mask)
    }

    pub fn spec(&self) -> &UnitCellSpec {
        &self.spec
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn kind(&self) -> CellKind {
        self.spec.kind
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    #[inline]
    pub fn phase(&self, idx: usize) -> Phase {
        self.phases[idx]
    }

    #[inline]
    pub fn phase_at(&self, c: [usize; 3]) -> Phase {
        self.phases[self.lattice.index(c)]
    }

    pub fn facets(&self, axis: usize) -> &[FacetLabel] {
        &self.facets[axis]
    }

    #[inline]
    pub fn facet(&self, axis: usize, c: [usize; 3]) -> FacetLabel {
        self.facets[axis][self.lattice.face_index(axis, c)]
    }

    pub fn count(&self, phase: Phase) -> usize {
        self.phases.iter().filter(|&&p| p == phase).count()
    }

    pub fn count_selected(&self, sel: PhaseSelector) -> usize {
        self.phases.iter().filter(|&&p| sel.contains(p)).count()
    }

    pub fn count_facets(&self, label: FacetLabel) -> usize {
        self.facets.iter().flatten().filter(|&&l| l == label).count()
    }

    pub(crate) fn periodic_array(&self) -> [bool; 3] {
        periodic_array(&self.spec)
    }

    /// Signed distance to the union of primitives of `phase` at point `x`.
    pub fn sdf(&self, x: &[f64; 3], phase: VesselPhase) -> f64 {
        phase_sdf(&self.spec, &self.periodic_array(), x, phase)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Primitive, Shape};

    #[test]
    fn empty_spec_is_all_tissue() {
        let spec = UnitCellSpec::new(CellKind::Fat, 3, vec![]);
        let m = build_mask(&spec, &GridSpec::uniform(3, 16).unwrap()).unwrap();
        assert_eq!(m.count(Phase::Tissue), 16 * 16 * 16);
        assert_eq!(m.count_facets(FacetLabel::GammaArtery), 0);
        assert_eq!(m.count_facets(FacetLabel::GammaVein), 0);
    }

    #[test]
    fn cylinder_volume_fraction() {
        let spec = UnitCellSpec::new(
            CellKind::Fat,
            3,
            vec![Primitive::artery(Shape::cylinder(0, &[0.5, 0.5, 0.5], 0.25))],
        );
        let m = build_mask(&spec, &GridSpec::uniform(3, 64).unwrap()).unwrap();
        let frac = m.count(Phase::Artery) as f64 / m.lattice().len() as f64;
        let exact = std::f64::consts::PI / 16.0;
        assert!((frac / exact - 1.0).abs() < 0.02, "{frac} vs {exact}");
    }

    #[test]
    fn overlapping_spheres_are_rejected() {
        let spec = UnitCellSpec::new(
            CellKind::Fat,
            3,
            vec![
                Primitive::artery(Shape::sphere(&[0.4, 0.5, 0.5], 0.2)),
                Primitive::vein(Shape::sphere(&[0.6, 0.5, 0.5], 0.2)),
            ],
        );
        let err = build_mask(&spec, &GridSpec::uniform(3, 16).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Overlap(_)));
    }

    #[test]
    fn touching_phases_in_fat_cell_are_rejected() {
        let spec = UnitCellSpec::new(
            CellKind::Fat,
            2,
            vec![
                Primitive::artery(Shape::span(&[0.0, 0.25], &[0.5, 0.75])),
                Primitive::vein(Shape::span(&[0.5, 0.25], &[1.0, 0.75])),
            ],
        );
        assert!(matches!(
            build_mask(&spec, &GridSpec::uniform(2, 16).unwrap()),
            Err(Error::Overlap(_))
        ));
        let skin = UnitCellSpec { kind: CellKind::SkinCase2, ..spec };
        let m = build_mask(&skin, &GridSpec::uniform(2, 16).unwrap()).unwrap();
        // two seams of 8 facets each
        assert_eq!(m.count_facets(FacetLabel::Sigma), 16);
    }

    #[test]
    fn thin_primitive_is_rejected() {
        let spec = UnitCellSpec::new(
            CellKind::Fat,
            2,
            vec![Primitive::artery(Shape::cylinder(0, &[0.5, 0.5], 0.05))],
        );
        assert!(matches!(
            build_mask(&spec, &GridSpec::uniform(2, 16).unwrap()),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn case1_boundary_labels() {
        let spec = UnitCellSpec::new(CellKind::SkinCase1, 2, vec![]);
        let m = build_mask(&spec, &GridSpec::uniform(2, 8).unwrap()).unwrap();
        assert_eq!(m.count_facets(FacetLabel::Bottom), 8);
        assert_eq!(m.count_facets(FacetLabel::Top), 8);
        let fat = UnitCellSpec::new(CellKind::Fat, 2, vec![]);
        let m = build_mask(&fat, &GridSpec::uniform(2, 8).unwrap()).unwrap();
        assert_eq!(m.count_facets(FacetLabel::Bottom) + m.count_facets(FacetLabel::Top), 0);
        assert_eq!(m.count_facets(FacetLabel::Periodic), 16);
    }

    #[test]
    fn primitive_outside_non_periodic_axis_is_rejected() {
        let spec = UnitCellSpec::new(
            CellKind::SkinCase1,
            2,
            vec![Primitive::artery(Shape::span(&[0.0, 0.8], &[0.5, 1.2]))],
        );
        assert!(matches!(
            build_mask(&spec, &GridSpec::uniform(2, 8).unwrap()),
            Err(Error::Geometry(_))
        ));
    }
}
