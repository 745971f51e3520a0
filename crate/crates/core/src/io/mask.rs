//! Binary voxel mask dump.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `THMASK01` |
//! | 1     | cell kind: 0 fat, 1 skin case 1, 2 skin case 2 |
//! | 1     | dimension (2 or 3) |
//! | 2     | reserved, zero |
//! | 4 × 3 | voxels per axis (unused axes 1) |
//! | n     | one phase byte per voxel: 0 artery, 1 vein, 2 tissue; x fastest |

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{CellKind, CellMask, GridSpec, Phase};

pub const MASK_MAGIC: &[u8; 8] = b"THMASK01";
const HEADER: usize = 24;

fn kind_code(k: CellKind) -> u8 {
    match k {
        CellKind::Fat => 0,
        CellKind::SkinCase1 => 1,
        CellKind::SkinCase2 => 2,
    }
}

pub fn encode_mask(mask: &CellMask) -> Vec<u8> {
    let res = &mask.grid().resolution;
    let mut out = Vec::with_capacity(HEADER + mask.phases().len());
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&[kind_code(mask.kind()), mask.dim() as u8, 0, 0]);
    for d in 0..3 {
        let n = res.get(d).copied().unwrap_or(1) as u32;
        out.extend_from_slice(&n.to_le_bytes());
    }
    out.extend(mask.phases().iter().map(|&p| p as u8));
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(format!("mask dump: {}", msg.into()))
}

/// Rebuilds a mask from [`encode_mask`] output. Facets are reclassified from
/// the phases; the primitives are not stored.
pub fn decode_mask(bytes: &[u8]) -> Result<CellMask> {
    if bytes.len() < HEADER || &bytes[..8] != MASK_MAGIC {
        return Err(bad("missing magic header"));
    }
    let kind = match bytes[8] {
        0 => CellKind::Fat,
        1 => CellKind::SkinCase1,
        2 => CellKind::SkinCase2,
        k => return Err(bad(format!("unknown cell kind {k}"))),
    };
    let dim = bytes[9] as usize;
    if !(2..=3).contains(&dim) {
        return Err(bad(format!("dimension {dim}")));
    }
    let res: Vec<usize> = (0..dim)
        .map(|d| u32::from_le_bytes(bytes[12 + 4 * d..16 + 4 * d].try_into().unwrap()) as usize)
        .collect();
    let n: usize = res.iter().product();
    if bytes.len() != HEADER + n {
        return Err(bad(format!("{} voxel bytes for {n} voxels", bytes.len() - HEADER)));
    }
    let phases = bytes[HEADER..]
        .iter()
        .map(|&b| Phase::from_u8(b).ok_or_else(|| bad(format!("invalid phase byte {b}"))))
        .collect::<Result<Vec<_>>>()?;
    CellMask::from_phases(kind, &GridSpec::new(&res)?, phases)
}

pub fn write_mask(path: &Path, mask: &CellMask) -> Result<()> {
    super::write_atomic(path, &encode_mask(mask))
}

pub fn read_mask(path: &Path) -> Result<CellMask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mask(&bytes)
}
