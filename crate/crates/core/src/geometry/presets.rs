//! Named reference cells.
//!
//! Vessel layouts are modeling choices: straight channels and crossings for
//! the fat layer, a T-junction with an artery/vein connection for the skin.

use super::{CellKind, Primitive, Shape, UnitCellSpec};
use crate::error::{Error, Result};

pub const FAT: &[&str] = &[
    "fat-channel-2d",
    "fat-cross-2d",
    "fat-pair-2d",
    "fat-vertical-2d",
    "fat-channel-3d",
    "fat-network-3d",
];

pub const SKIN_CASE1: &[&str] = &[
    "skin1-tjunction-2d",
    "skin1-bars-2d",
    "skin1-layer-2d",
    "skin1-offset-2d",
    "skin1-tjunction-3d",
];

pub const SKIN_CASE2: &[&str] = &[
    "skin2-tjunction-2d",
    "skin2-bars-2d",
    "skin2-risers-2d",
    "skin2-offset-2d",
    "skin2-tjunction-3d",
];

/// Square artery inclusion used by the micro-scale reference solver.
pub const DNS: &str = "dns-square-2d";

pub fn names() -> Vec<&'static str> {
    FAT.iter()
        .chain(SKIN_CASE1)
        .chain(SKIN_CASE2)
        .copied()
        .chain(std::iter::once(DNS))
        .collect()
}

pub fn family(kind: CellKind) -> &'static [&'static str] {
    match kind {
        CellKind::Fat => FAT,
        CellKind::SkinCase1 => SKIN_CASE1,
        CellKind::SkinCase2 => SKIN_CASE2,
    }
}

fn a(shape: Shape) -> Primitive {
    Primitive::artery(shape)
}

fn v(shape: Shape) -> Primitive {
    Primitive::vein(shape)
}

fn b(lo: &[f64], hi: &[f64]) -> Shape {
    Shape::span(lo, hi)
}

fn tjunction_2d(kind: CellKind, riser_top: f64) -> UnitCellSpec {
    UnitCellSpec::new(
        kind,
        2,
        vec![
            a(b(&[0.0, 0.5], &[0.5, 0.7])),
            v(b(&[0.5, 0.5], &[1.0, 0.7])),
            a(b(&[0.15, 0.0], &[0.35, riser_top])),
            v(b(&[0.65, 0.0], &[0.85, riser_top])),
        ],
    )
}

fn tjunction_3d(kind: CellKind, riser_top: f64) -> UnitCellSpec {
    UnitCellSpec::new(
        kind,
        3,
        vec![
            a(b(&[0.0, 0.0, 0.5], &[0.5, 1.0, 0.75])),
            v(b(&[0.5, 0.0, 0.5], &[1.0, 1.0, 0.75])),
            a(b(&[0.125, 0.375, 0.0], &[0.375, 0.625, riser_top])),
            v(b(&[0.625, 0.375, 0.0], &[0.875, 0.625, riser_top])),
        ],
    )
}

/// Returns the named preset cell.
pub fn cell(name: &str) -> Result<UnitCellSpec> {
    use CellKind::*;
    let spec = match name {
        "fat-channel-2d" => UnitCellSpec::new(Fat, 2, vec![a(Shape::cuboid(&[0.5, 0.5], &[1.0, 0.5]))]),
        "fat-cross-2d" => UnitCellSpec::new(
            Fat,
            2,
            vec![
                a(Shape::cuboid(&[0.5, 0.5], &[1.0, 0.25])),
                a(Shape::cuboid(&[0.5, 0.5], &[0.25, 1.0])),
            ],
        ),
        "fat-pair-2d" => UnitCellSpec::new(
            Fat,
            2,
            vec![
                a(Shape::cuboid(&[0.5, 0.25], &[1.0, 0.25])),
                v(Shape::cuboid(&[0.5, 0.75], &[1.0, 0.25])),
            ],
        ),
        "fat-vertical-2d" => UnitCellSpec::new(
            Fat,
            2,
            vec![
                a(Shape::cuboid(&[0.25, 0.5], &[0.25, 1.0])),
                v(Shape::cuboid(&[0.75, 0.5], &[0.25, 1.0])),
            ],
        ),
        "fat-channel-3d" => UnitCellSpec::new(Fat, 3, vec![a(Shape::cylinder(0, &[0.5, 0.5, 0.5], 0.25))]),
        "fat-network-3d" => {
            let mut prims = Vec::new();
            for axis in 0..3 {
                prims.push(a(Shape::cylinder(axis, &[0.5, 0.5, 0.5], 0.15)));
                prims.push(v(Shape::cylinder(axis, &[0.0, 0.0, 0.0], 0.15)));
            }
            UnitCellSpec::new(Fat, 3, prims)
        }
        "skin1-tjunction-2d" => tjunction_2d(SkinCase1, 0.6),
        "skin1-bars-2d" => UnitCellSpec::new(
            SkinCase1,
            2,
            vec![a(b(&[0.0, 0.4], &[0.5, 0.6])), v(b(&[0.5, 0.4], &[1.0, 0.6]))],
        ),
        "skin1-layer-2d" => UnitCellSpec::new(
            SkinCase1,
            2,
            vec![a(b(&[0.0, 0.0], &[0.5, 0.5])), v(b(&[0.5, 0.0], &[1.0, 0.5]))],
        ),
        "skin1-offset-2d" => UnitCellSpec::new(
            SkinCase1,
            2,
            vec![
                a(b(&[0.0, 0.25], &[0.625, 0.5])),
                v(b(&[0.625, 0.25], &[1.0, 0.5])),
                a(b(&[0.25, 0.0], &[0.375, 0.3])),
                v(b(&[0.75, 0.0], &[0.875, 0.3])),
            ],
        ),
        "skin1-tjunction-3d" => tjunction_3d(SkinCase1, 0.6),
        "skin2-tjunction-2d" => tjunction_2d(SkinCase2, 1.0),
        "skin2-bars-2d" => UnitCellSpec::new(
            SkinCase2,
            2,
            vec![a(b(&[0.0, 0.4], &[0.5, 0.6])), v(b(&[0.5, 0.4], &[1.0, 0.6]))],
        ),
        "skin2-risers-2d" => UnitCellSpec::new(
            SkinCase2,
            2,
            vec![a(b(&[0.125, 0.0], &[0.375, 1.0])), v(b(&[0.625, 0.0], &[0.875, 1.0]))],
        ),
        "skin2-offset-2d" => UnitCellSpec::new(
            SkinCase2,
            2,
            vec![
                a(b(&[0.0, 0.25], &[0.625, 0.5])),
                v(b(&[0.625, 0.25], &[1.0, 0.5])),
                a(b(&[0.25, 0.0], &[0.375, 1.0])),
            ],
        ),
        "skin2-tjunction-3d" => tjunction_3d(SkinCase2, 1.0),
        "dns-square-2d" => UnitCellSpec::new(Fat, 2, vec![a(b(&[0.25, 0.25], &[0.75, 0.75]))]),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset `{other}`; available: {}",
                names().join(", ")
            )))
        }
    };
    Ok(spec)
}
