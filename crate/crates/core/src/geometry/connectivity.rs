use std::collections::VecDeque;

use super::{CellMask, PhaseSelector};

/// Face-connected components of the selected voxels with periodic wrapping.
/// Returns one label per voxel (`usize::MAX` outside the selection) and the
/// number of components. Labels follow the voxel ordering.
pub fn components(mask: &CellMask, sel: PhaseSelector) -> (Vec<usize>, usize) {
    let lattice = mask.lattice();
    let mut labels = vec![usize::MAX; lattice.len()];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..lattice.len() {
        if labels[start] != usize::MAX || !sel.contains(mask.phase(start)) {
            continue;
        }
        labels[start] = count;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            let c = lattice.coords(idx);
            for axis in 0..mask.dim() {
                for step in [-1, 1] {
                    if let Some(nb) = lattice.neighbor(c, axis, step) {
                        let j = lattice.index(nb);
                        if labels[j] == usize::MAX && sel.contains(mask.phase(j)) {
                            labels[j] = count;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        count += 1;
    }
    (labels, count)
}

/// Whether the selected voxels percolate along `axis`.
///
/// On a periodic axis this means some face-connected path winds around the
/// cell; on a non-periodic axis it means the bottom and top layers are
/// connected.
pub fn percolates(mask: &CellMask, sel: PhaseSelector, axis: usize) -> bool {
    let lattice = mask.lattice();
    if axis >= mask.dim() {
        return false;
    }
    let n = lattice.n();
    if !lattice.periodic(axis) {
        let mut seen = vec![false; lattice.len()];
        let mut queue = VecDeque::new();
        for idx in 0..lattice.len() {
            if lattice.coords(idx)[axis] == 0 && sel.contains(mask.phase(idx)) {
                seen[idx] = true;
                queue.push_back(idx);
            }
        }
        while let Some(idx) = queue.pop_front() {
            let c = lattice.coords(idx);
            if c[axis] == n[axis] - 1 {
                return true;
            }
            for d in 0..mask.dim() {
                for step in [-1, 1] {
                    if let Some(nb) = lattice.neighbor(c, d, step) {
                        let j = lattice.index(nb);
                        if !seen[j] && sel.contains(mask.phase(j)) {
                            seen[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
        }
        return false;
    }
    // track the periodic image each voxel was reached in; reaching a voxel
    // again in a different image closes a loop that winds around the axis
    let mut image: Vec<Option<i64>> = vec![None; lattice.len()];
    let mut queue = VecDeque::new();
    for start in 0..lattice.len() {
        if image[start].is_some() || !sel.contains(mask.phase(start)) {
            continue;
        }
        image[start] = Some(0);
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            let c = lattice.coords(idx);
            let off = image[idx].unwrap();
            for d in 0..mask.dim() {
                for step in [-1isize, 1] {
                    let Some(nb) = lattice.neighbor(c, d, step) else {
                        continue;
                    };
                    let j = lattice.index(nb);
                    if !sel.contains(mask.phase(j)) {
                        continue;
                    }
                    let mut o = off;
                    if d == axis {
                        if step > 0 && c[d] == n[d] - 1 {
                            o += 1;
                        } else if step < 0 && c[d] == 0 {
                            o -= 1;
                        }
                    }
                    match image[j] {
                        None => {
                            image[j] = Some(o);
                            queue.push_back(j);
                        }
                        Some(prev) if prev != o => return true,
                        _ => {}
                    }
                }
            }
        }
    }
    false
}

/// Connectivity check used by the cell solvers and the command line.
pub fn validate_connectivity(mask: &CellMask, sel: PhaseSelector, axis: usize) -> bool {
    percolates(mask, sel, axis)
}
