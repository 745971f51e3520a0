use serde::{Deserialize, Serialize};

/// Blood phases a primitive can belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VesselPhase {
    Artery,
    Vein,
}

/// Axis-aligned solid shapes. Coordinates are in unit-cell units; vectors have
/// one entry per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    /// Circular cylinder around a line parallel to `axis` through `center`.
    /// Without `length` the cylinder is infinite (periodic) along its axis.
    /// In 2D this is a strip of half-width `radius`.
    Cylinder {
        axis: usize,
        center: Vec<f64>,
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        length: Option<f64>,
    },
    /// Box with full side lengths `extents`. An extent of at least 1 along a
    /// periodic axis spans the whole period.
    Box { center: Vec<f64>, extents: Vec<f64> },
    Sphere { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub phase: VesselPhase,
    #[serde(flatten)]
    pub shape: Shape,
}

impl Primitive {
    pub fn new(phase: VesselPhase, shape: Shape) -> Self {
        Self { phase, shape }
    }

    pub fn artery(shape: Shape) -> Self {
        Self::new(VesselPhase::Artery, shape)
    }

    pub fn vein(shape: Shape) -> Self {
        Self::new(VesselPhase::Vein, shape)
    }
}

impl Shape {
    pub fn cylinder(axis: usize, center: &[f64], radius: f64) -> Self {
        Shape::Cylinder {
            axis,
            center: center.to_vec(),
            radius,
            length: None,
        }
    }

    pub fn capped_cylinder(axis: usize, center: &[f64], radius: f64, length: f64) -> Self {
        Shape::Cylinder {
            axis,
            center: center.to_vec(),
            radius,
            length: Some(length),
        }
    }

    pub fn cuboid(center: &[f64], extents: &[f64]) -> Self {
        Shape::Box {
            center: center.to_vec(),
            extents: extents.to_vec(),
        }
    }

    /// Box given by its lower and upper corners.
    pub fn span(lo: &[f64], hi: &[f64]) -> Self {
        let center: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let extents: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| b - a).collect();
        Shape::Box { center, extents }
    }

    pub fn sphere(center: &[f64], radius: f64) -> Self {
        Shape::Sphere {
            center: center.to_vec(),
            radius,
        }
    }

    pub fn center(&self) -> &[f64] {
        match self {
            Shape::Cylinder { center, .. } | Shape::Box { center, .. } | Shape::Sphere { center, .. } => center,
        }
    }

    /// Mutable center, used for lattice translations.
    pub fn center_mut(&mut self) -> &mut Vec<f64> {
        match self {
            Shape::Cylinder { center, .. } | Shape::Box { center, .. } | Shape::Sphere { center, .. } => center,
        }
    }

    /// Smallest feature size along the given axes, or `None` if the shape is
    /// unbounded there.
    pub fn thickness(&self, axis: usize, periodic: bool) -> Option<f64> {
        match self {
            Shape::Cylinder {
                axis: a,
                radius,
                length,
            .. } => {
                if axis == *a {
                    *length
                } else {
                    Some(2.0 * radius)
                }
            }
            Shape::Box { extents, .. } => {
                let e = extents[axis];
                if periodic && e >= 1.0 {
                    None
                } else {
                    Some(e)
                }
            }
            Shape::Sphere { radius, .. } => Some(2.0 * radius),
        }
    }

    /// Half-open extent along `axis` relative to the center, if bounded.
    pub fn half_extent(&self, axis: usize) -> Option<f64> {
        match self {
            Shape::Cylinder {
                axis: a,
                radius,
                length,
            .. } => {
                if axis == *a {
                    length.map(|l| 0.5 * l)
                } else {
                    Some(*radius)
                }
            }
            Shape::Box { extents, .. } => Some(0.5 * extents[axis]),
            Shape::Sphere { radius, .. } => Some(*radius),
        }
    }

    /// Signed distance from a point given as its displacement `d` from the
    /// shape center (already reduced to the minimum image on periodic axes).
    pub fn sdf(&self, d: &[f64; 3], dim: usize, periodic: &[bool; 3]) -> f64 {
        match self {
            Shape::Sphere { radius, .. } => {
                let r2: f64 = d[..dim].iter().map(|x| x * x).sum();
                r2.sqrt() - radius
            }
            Shape::Cylinder {
                axis,
                radius,
                length,
            .. } => {
                let r2: f64 = (0..dim).filter(|k| k != axis).map(|k| d[k] * d[k]).sum();
                let radial = r2.sqrt() - radius;
                match length {
                    None => radial,
                    Some(l) => {
                        let along = d[*axis].abs() - 0.5 * l;
                        let ox = radial.max(0.0);
                        let oy = along.max(0.0);
                        (ox * ox + oy * oy).sqrt() + radial.max(along).min(0.0)
                    }
                }
            }
            Shape::Box { extents, .. } => {
                let mut outside = 0.0;
                let mut inside = f64::NEG_INFINITY;
                for k in 0..dim {
                    if periodic[k] && extents[k] >= 1.0 {
                        continue;
                    }
                    let q = d[k].abs() - 0.5 * extents[k];
                    outside += q.max(0.0).powi(2);
                    inside = inside.max(q);
                }
                if inside == f64::NEG_INFINITY {
                    // spans every axis
                    return -1.0;
                }
                outside.sqrt() + inside.min(0.0)
            }
        }
    }
}
