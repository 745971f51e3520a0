use rayon::prelude::*;

use super::{CellKind, CellMask, FacetLabel, Phase, VesselPhase};

/// Volume fractions and wall measures of a unit cell, all per unit cell
/// volume.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMeasures {
    pub kind: CellKind,
    pub dim: usize,
    pub voxels: usize,
    /// Voxel counts for artery, vein, tissue.
    pub counts: [usize; 3],
    /// Volume fractions for artery, vein, tissue.
    pub theta: [f64; 3],
    /// Wall measure of artery and vein from the reconstructed level set.
    pub surface: [f64; 2],
    /// Wall measure of artery and vein counted on voxel facets.
    pub staircase: [f64; 2],
    /// Facet measure of the artery/vein connection surface.
    pub sigma: f64,
}

impl CellMeasures {
    pub fn theta(&self, phase: Phase) -> f64 {
        self.theta[phase as usize]
    }

    pub fn surface(&self, phase: VesselPhase) -> f64 {
        self.surface[phase as usize]
    }

    pub fn staircase(&self, phase: VesselPhase) -> f64 {
        self.staircase[phase as usize]
    }

    /// Key-value text summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("kind = \"{}\"\n", self.kind.name()));
        s.push_str(&format!("dim = {}\n", self.dim));
        s.push_str(&format!("voxels = {}\n", self.voxels));
        for (name, i) in [("artery", 0), ("vein", 1), ("tissue", 2)] {
            s.push_str(&format!("count_{name} = {}\n", self.counts[i]));
        }
        for (name, i) in [("artery", 0), ("vein", 1), ("tissue", 2)] {
            s.push_str(&format!("theta_{name} = {:.16e}\n", self.theta[i]));
        }
        for (name, i) in [("artery", 0), ("vein", 1)] {
            s.push_str(&format!("surface_{name} = {:.16e}\n", self.surface[i]));
            s.push_str(&format!("staircase_{name} = {:.16e}\n", self.staircase[i]));
        }
        s.push_str(&format!("sigma = {:.16e}\n", self.sigma));
        s
    }
}

/// Volume fractions by voxel counting and wall measures by marching squares
/// (2D) or marching tetrahedra (3D) on the node-sampled distance fields.
/// Nodes with zero distance count as inside so that walls shared by two
/// touching primitives do not produce contours.
pub fn measure_cell(mask: &CellMask) -> CellMeasures {
    let lattice = mask.lattice();
    let n = lattice.len();
    let mut counts = [0usize; 3];
    for &p in mask.phases() {
        counts[p as usize] += 1;
    }
    let theta_a = counts[0] as f64 / n as f64;
    let theta_v = counts[1] as f64 / n as f64;
    let theta = [theta_a, theta_v, counts[2] as f64 / n as f64];

    let mut staircase = [0.0; 2];
    let mut sigma = 0.0;
    for axis in 0..mask.dim() {
        let area = lattice.face_area(axis);
        for &l in mask.facets(axis) {
            match l {
                FacetLabel::GammaArtery | FacetLabel::RArtery => staircase[0] += area,
                FacetLabel::GammaVein | FacetLabel::RVein => staircase[1] += area,
                FacetLabel::Sigma => sigma += area,
                _ => {}
            }
        }
    }

    let surface = if mask.spec().primitives.is_empty() {
        [0.0; 2]
    } else if mask.kind() == CellKind::Fat {
        [
            level_set_measure(mask, Mode::Single(VesselPhase::Artery))[0],
            level_set_measure(mask, Mode::Single(VesselPhase::Vein))[1],
        ]
    } else {
        level_set_measure(mask, Mode::Blood)
    };

    CellMeasures {
        kind: mask.kind(),
        dim: mask.dim(),
        voxels: n,
        counts,
        theta,
        surface,
        staircase,
        sigma,
    }
}

#[derive(Clone, Copy)]
enum Mode {
    Single(VesselPhase),
    /// Boundary of artery and vein together; pieces attributed to the closer
    /// phase.
    Blood,
}

struct NodeField {
    n: [usize; 3],
    h: [f64; 3],
    values: Vec<f64>,
}

impl NodeField {
    fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[i + (self.n[0] + 1) * (j + (self.n[1] + 1) * k)]
    }

    fn pos(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [i as f64 * self.h[0], j as f64 * self.h[1], k as f64 * self.h[2]]
    }
}

fn level_value(mask: &CellMask, x: &[f64; 3], mode: Mode) -> f64 {
    match mode {
        Mode::Single(p) => mask.sdf(x, p),
        Mode::Blood => mask.sdf(x, VesselPhase::Artery).min(mask.sdf(x, VesselPhase::Vein)),
    }
}

fn attribute(mask: &CellMask, x: &[f64; 3], mode: Mode) -> usize {
    match mode {
        Mode::Single(p) => p as usize,
        Mode::Blood => {
            if mask.sdf(x, VesselPhase::Artery) <= mask.sdf(x, VesselPhase::Vein) {
                0
            } else {
                1
            }
        }
    }
}

fn level_set_measure(mask: &CellMask, mode: Mode) -> [f64; 2] {
    let lattice = mask.lattice();
    let dim = mask.dim();
    let n = lattice.n();
    let nk = if dim == 3 { n[2] + 1 } else { 1 };
    let h = [lattice.h(0), lattice.h(1), if dim == 3 { lattice.h(2) } else { 0.0 }];
    let values: Vec<f64> = (0..(n[0] + 1) * (n[1] + 1) * nk)
        .into_par_iter()
        .map(|idx| {
            let i = idx % (n[0] + 1);
            let j = (idx / (n[0] + 1)) % (n[1] + 1);
            let k = idx / ((n[0] + 1) * (n[1] + 1));
            let x = [i as f64 * h[0], j as f64 * h[1], k as f64 * h[2]];
            level_value(mask, &x, mode)
        })
        .collect();
    let field = NodeField { n, h, values };
    let partial: Vec<[f64; 2]> = if dim == 2 {
        (0..n[1])
            .into_par_iter()
            .map(|j| {
                let mut acc = [0.0; 2];
                for i in 0..n[0] {
                    marching_square(&field, i, j, &mut |len, mid| {
                        acc[attribute(mask, &mid, mode)] += len;
                    });
                }
                acc
            })
            .collect()
    } else {
        (0..n[2])
            .into_par_iter()
            .map(|k| {
                let mut acc = [0.0; 2];
                for j in 0..n[1] {
                    for i in 0..n[0] {
                        marching_tets(&field, i, j, k, &mut |area, mid| {
                            acc[attribute(mask, &mid, mode)] += area;
                        });
                    }
                }
                acc
            })
            .collect()
    };
    // sequential reduction keeps the result independent of thread count
    partial.iter().fold([0.0; 2], |a, p| [a[0] + p[0], a[1] + p[1]])
}

fn crossing(pa: [f64; 3], fa: f64, pb: [f64; 3], fb: f64) -> [f64; 3] {
    let t = fa / (fa - fb);
    [
        pa[0] + t * (pb[0] - pa[0]),
        pa[1] + t * (pb[1] - pa[1]),
        pa[2] + t * (pb[2] - pa[2]),
    ]
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

fn midpoint(pts: &[[f64; 3]]) -> [f64; 3] {
    let mut m = [0.0; 3];
    for p in pts {
        for d in 0..3 {
            m[d] += p[d];
        }
    }
    let s = pts.len() as f64;
    [m[0] / s, m[1] / s, m[2] / s]
}

fn marching_square(f: &NodeField, i: usize, j: usize, emit: &mut impl FnMut(f64, [f64; 3])) {
    let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
    let v: Vec<f64> = corners.iter().map(|&(a, b)| f.at(a, b, 0)).collect();
    let p: Vec<[f64; 3]> = corners.iter().map(|&(a, b)| f.pos(a, b, 0)).collect();
    let inside: Vec<bool> = v.iter().map(|&x| x <= 0.0).collect();
    let mut edge_pts: [Option<[f64; 3]>; 4] = [None; 4];
    let mut count = 0;
    for e in 0..4 {
        let a = e;
        let b = (e + 1) % 4;
        if inside[a] != inside[b] {
            edge_pts[e] = Some(crossing(p[a], v[a], p[b], v[b]));
            count += 1;
        }
    }
    let mut segment = |e0: usize, e1: usize| {
        let a = edge_pts[e0].unwrap();
        let b = edge_pts[e1].unwrap();
        emit(norm(sub(b, a)), midpoint(&[a, b]));
    };
    match count {
        2 => {
            let es: Vec<usize> = (0..4).filter(|&e| edge_pts[e].is_some()).collect();
            segment(es[0], es[1]);
        }
        4 => {
            let center_inside = v.iter().sum::<f64>() <= 0.0;
            // cut off the corners whose type differs from the center
            for c in 0..4 {
                if inside[c] != center_inside {
                    segment((c + 3) % 4, c);
                }
            }
        }
        _ => {}
    }
}

/// Kuhn subdivision of the unit cube into six tetrahedra sharing the main
/// diagonal; consistent across neighboring cubes.
const KUHN: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

fn marching_tets(f: &NodeField, i: usize, j: usize, k: usize, emit: &mut impl FnMut(f64, [f64; 3])) {
    for perm in KUHN {
        let mut c = [i, j, k];
        let mut verts = [[0usize; 3]; 4];
        verts[0] = c;
        for (s, &axis) in perm.iter().enumerate() {
            c[axis] += 1;
            verts[s + 1] = c;
        }
        let v: [f64; 4] = std::array::from_fn(|t| f.at(verts[t][0], verts[t][1], verts[t][2]));
        let p: [[f64; 3]; 4] = std::array::from_fn(|t| f.pos(verts[t][0], verts[t][1], verts[t][2]));
        let ins: Vec<usize> = (0..4).filter(|&t| v[t] <= 0.0).collect();
        let outs: Vec<usize> = (0..4).filter(|&t| v[t] > 0.0).collect();
        match ins.len() {
            1 | 3 => {
                let (lone, others) = if ins.len() == 1 { (ins[0], &outs) } else { (outs[0], &ins) };
                let q: Vec<[f64; 3]> = others
                    .iter()
                    .map(|&o| crossing(p[lone], v[lone], p[o], v[o]))
                    .collect();
                let area = 0.5 * norm(cross(sub(q[1], q[0]), sub(q[2], q[0])));
                emit(area, midpoint(&q));
            }
            2 => {
                let (a, b) = (ins[0], ins[1]);
                let (c2, d) = (outs[0], outs[1]);
                let q = [
                    crossing(p[a], v[a], p[c2], v[c2]),
                    crossing(p[a], v[a], p[d], v[d]),
                    crossing(p[b], v[b], p[d], v[d]),
                    crossing(p[b], v[b], p[c2], v[c2]),
                ];
                let area = 0.5 * norm(cross(sub(q[2], q[0]), sub(q[3], q[1])));
                emit(area, midpoint(&q));
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_mask, GridSpec, Primitive, Shape, UnitCellSpec};
    use std::f64::consts::PI;

    fn cylinder_cell(n: usize) -> CellMask {
        let spec = UnitCellSpec::new(
            CellKind::Fat,
            3,
            vec![Primitive::artery(Shape::cylinder(0, &[0.5, 0.5, 0.5], 0.25))],
        );
        build_mask(&spec, &GridSpec::uniform(3, n).unwrap()).unwrap()
    }

    #[test]
    fn all_tissue_measures() {
        let spec = UnitCellSpec::new(CellKind::Fat, 2, vec![]);
        let m = measure_cell(&build_mask(&spec, &GridSpec::uniform(2, 8).unwrap()).unwrap());
        assert_eq!(m.theta, [0.0, 0.0, 1.0]);
        assert_eq!(m.surface, [0.0, 0.0]);
    }

    #[test]
    fn cylinder_lateral_area() {
        let m = measure_cell(&cylinder_cell(64));
        let exact = PI / 2.0;
        assert!((m.surface[0] / exact - 1.0).abs() < 0.02, "{}", m.surface[0]);
        // staircase overestimates by roughly 4/pi
        assert!(m.staircase[0] > 1.2 * exact);
    }

    #[test]
    fn disk_perimeter_2d() {
        let spec = UnitCellSpec::new(
            CellKind::Fat,
            2,
            vec![Primitive::vein(Shape::sphere(&[0.5, 0.5], 0.3))],
        );
        let m = measure_cell(&build_mask(&spec, &GridSpec::uniform(2, 64).unwrap()).unwrap());
        assert!((m.surface[1] / (2.0 * PI * 0.3) - 1.0).abs() < 0.005);
        assert_eq!(m.surface[0], 0.0);
    }

    #[test]
    fn aligned_slab_is_exact() {
        let spec = UnitCellSpec::new(
            CellKind::Fat,
            2,
            vec![Primitive::artery(Shape::span(&[0.0, 0.0], &[0.5, 1.0]))],
        );
        let m = measure_cell(&build_mask(&spec, &GridSpec::uniform(2, 16).unwrap()).unwrap());
        assert_eq!(m.theta[0], 0.5);
        assert!((m.surface[0] - 2.0).abs() < 1e-12);
        assert!((m.staircase[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn skin_pieces_are_attributed_by_phase() {
        let spec = UnitCellSpec::new(
            CellKind::SkinCase2,
            2,
            vec![
                Primitive::artery(Shape::span(&[0.0, 0.25], &[0.5, 0.5])),
                Primitive::vein(Shape::span(&[0.5, 0.25], &[1.0, 0.5])),
            ],
        );
        let m = measure_cell(&build_mask(&spec, &GridSpec::uniform(2, 16).unwrap()).unwrap());
        assert!((m.surface[0] - 1.0).abs() < 1e-12, "{:?}", m.surface);
        assert!((m.surface[1] - 1.0).abs() < 1e-12);
        assert!((m.sigma - 0.5).abs() < 1e-12);
    }
}
