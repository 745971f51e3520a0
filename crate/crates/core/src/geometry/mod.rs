//! Periodic unit-cell geometry: primitives, voxel masks, facet labels and the
//! measures entering the effective coefficients.

mod connectivity;
mod mask;
pub mod presets;
mod primitive;
mod surface;

use serde::{Deserialize, Serialize};

pub use connectivity::{components, percolates, validate_connectivity};
pub use mask::{build_mask, CellMask};
pub use primitive::{Primitive, Shape, VesselPhase};
pub use surface::{measure_cell, CellMeasures};

use crate::error::{Error, Result};

/// The three unit-cell families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellKind {
    /// Fully periodic fat-layer cell; artery and vein strictly disjoint.
    Fat,
    /// Skin cell periodic in the horizontal axes only, with a slip bottom
    /// and a no-slip top.
    SkinCase1,
    /// Fully periodic skin cell.
    SkinCase2,
}

impl CellKind {
    pub fn is_skin(self) -> bool {
        !matches!(self, CellKind::Fat)
    }

    pub fn periodic_axes(self, dim: usize) -> Vec<bool> {
        (0..dim)
            .map(|d| !(self == CellKind::SkinCase1 && d == dim - 1))
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Fat => "fat",
            CellKind::SkinCase1 => "skin-case1",
            CellKind::SkinCase2 => "skin-case2",
        }
    }
}

/// Geometry of a unit cell as a union of primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitCellSpec {
    pub kind: CellKind,
    pub dim: usize,
    #[serde(default, rename = "primitive")]
    pub primitives: Vec<Primitive>,
}

impl UnitCellSpec {
    pub fn new(kind: CellKind, dim: usize, primitives: Vec<Primitive>) -> Self {
        Self {
            kind,
            dim,
            primitives,
        }
    }

    pub fn periodic_axes(&self) -> Vec<bool> {
        self.kind.periodic_axes(self.dim)
    }

    /// Checks dimensions and that every primitive fits the cell along
    /// non-periodic axes.
    pub fn validate(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::Geometry(format!("dimension must be 2 or 3, got {}", self.dim)));
        }
        let periodic = self.periodic_axes();
        for (k, p) in self.primitives.iter().enumerate() {
            let center = match &p.shape {
                Shape::Cylinder {
                    axis,
                    center,
                    radius,
                    length,
                } => {
                    if *axis >= self.dim {
                        return Err(Error::Geometry(format!("primitive {k}: axis {axis} out of range")));
                    }
                    if !(*radius > 0.0) || length.is_some_and(|l| !(l > 0.0)) {
                        return Err(Error::Geometry(format!("primitive {k}: non-positive size")));
                    }
                    center
                }
                Shape::Box { center, extents } => {
                    if extents.len() != self.dim {
                        return Err(Error::Geometry(format!(
                            "primitive {k}: expected {} extents, got {}",
                            self.dim,
                            extents.len()
                        )));
                    }
                    if extents.iter().any(|e| !(*e > 0.0)) {
                        return Err(Error::Geometry(format!("primitive {k}: non-positive extent")));
                    }
                    center
                }
                Shape::Sphere { center, radius } => {
                    if !(*radius > 0.0) {
                        return Err(Error::Geometry(format!("primitive {k}: non-positive radius")));
                    }
                    center
                }
            };
            if center.len() != self.dim {
                return Err(Error::Geometry(format!(
                    "primitive {k}: expected {} center coordinates, got {}",
                    self.dim,
                    center.len()
                )));
            }
            if center.iter().any(|c| !c.is_finite()) {
                return Err(Error::Geometry(format!("primitive {k}: non-finite center")));
            }
            for d in 0..self.dim {
                if periodic[d] {
                    continue;
                }
                if let Some(half) = p.shape.half_extent(d) {
                    let lo = center[d] - half;
                    let hi = center[d] + half;
                    if lo < -1e-12 || hi > 1.0 + 1e-12 {
                        return Err(Error::Geometry(format!(
                            "primitive {k}: extends outside [0, 1] along non-periodic axis {d}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Copy with every primitive translated by `shift` (periodic axes only).
    pub fn translated(&self, shift: &[f64]) -> Self {
        let mut out = self.clone();
        let periodic = self.periodic_axes();
        for p in &mut out.primitives {
            let c = p.shape.center_mut();
            for d in 0..self.dim {
                if periodic[d] {
                    c[d] = (c[d] + shift[d]).rem_euclid(1.0);
                }
            }
        }
        out
    }
}

/// Voxel resolution of a unit cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub resolution: Vec<usize>,
}

impl GridSpec {
    pub fn new(resolution: &[usize]) -> Result<Self> {
        if resolution.len() != 2 && resolution.len() != 3 {
            return Err(Error::InvalidArgument(format!(
                "grid must have 2 or 3 axes, got {}",
                resolution.len()
            )));
        }
        if let Some(r) = resolution.iter().find(|&&r| r < 4) {
            return Err(Error::InvalidArgument(format!("grid resolution {r} below the minimum of 4")));
        }
        Ok(Self {
            resolution: resolution.to_vec(),
        })
    }

    pub fn uniform(dim: usize, n: usize) -> Result<Self> {
        Self::new(&vec![n; dim])
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.resolution.iter().map(|&n| 1.0 / n as f64).collect()
    }
}

/// Per-voxel phase label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Phase {
    Artery = 0,
    Vein = 1,
    Tissue = 2,
}

impl Phase {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Phase::Artery),
            1 => Some(Phase::Vein),
            2 => Some(Phase::Tissue),
            _ => None,
        }
    }
}

/// A set of phases, used to select the domain of a cell problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseSelector {
    Artery,
    Vein,
    Tissue,
    /// Artery and vein together.
    Blood,
    /// Every voxel.
    All,
}

impl PhaseSelector {
    #[inline]
    pub fn contains(self, p: Phase) -> bool {
        match self {
            PhaseSelector::Artery => p == Phase::Artery,
            PhaseSelector::Vein => p == Phase::Vein,
            PhaseSelector::Tissue => p == Phase::Tissue,
            PhaseSelector::Blood => p != Phase::Tissue,
            PhaseSelector::All => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PhaseSelector::Artery => "artery",
            PhaseSelector::Vein => "vein",
            PhaseSelector::Tissue => "tissue",
            PhaseSelector::Blood => "blood",
            PhaseSelector::All => "all",
        }
    }
}

impl From<Phase> for PhaseSelector {
    fn from(p: Phase) -> Self {
        match p {
            Phase::Artery => PhaseSelector::Artery,
            Phase::Vein => PhaseSelector::Vein,
            Phase::Tissue => PhaseSelector::Tissue,
        }
    }
}

/// Classification of an inter-voxel face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FacetLabel {
    Interior = 0,
    /// Artery/tissue wall in a fat cell.
    GammaArtery = 1,
    GammaVein = 2,
    /// Artery/tissue wall in a skin cell.
    RArtery = 3,
    RVein = 4,
    /// Artery/vein connection surface in a skin cell.
    Sigma = 5,
    /// Bottom boundary of a case-1 skin cell.
    Bottom = 6,
    /// Top boundary of a case-1 skin cell.
    Top = 7,
    /// Same-phase face on the periodic seam.
    Periodic = 8,
}

impl FacetLabel {
    pub fn is_wall(self) -> bool {
        matches!(
            self,
            FacetLabel::GammaArtery | FacetLabel::GammaVein | FacetLabel::RArtery | FacetLabel::RVein
        )
    }

    pub fn is_boundary(self) -> bool {
        matches!(self, FacetLabel::Bottom | FacetLabel::Top)
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        use FacetLabel::*;
        [Interior, GammaArtery, GammaVein, RArtery, RVein, Sigma, Bottom, Top, Periodic]
            .get(v as usize)
            .copied()
    }
}
