//! Index bookkeeping for voxel grids on the unit cell.
//!
//! Voxels are stored x-fastest. Two-dimensional grids use `n[2] == 1`.
//! Faces normal to axis `d` are indexed by the voxel on their high side, so
//! face `c` separates voxel `c - e_d` and voxel `c`. Along a non-periodic axis
//! there is one extra layer of faces; index `n[d]` is the top boundary.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lattice {
    dim: usize,
    n: [usize; 3],
    periodic: [bool; 3],
}

impl Lattice {
    /// `resolution.len()` must be 2 or 3.
    pub fn new(resolution: &[usize], periodic: &[bool]) -> Self {
        assert!(resolution.len() == 2 || resolution.len() == 3);
        assert_eq!(resolution.len(), periodic.len());
        let mut n = [1; 3];
        let mut p = [true; 3];
        for d in 0..resolution.len() {
            n[d] = resolution[d];
            p[d] = periodic[d];
        }
        Self {
            dim: resolution.len(),
            n,
            periodic: p,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> [usize; 3] {
        self.n
    }

    pub fn periodic(&self, axis: usize) -> bool {
        self.periodic[axis]
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h(&self, axis: usize) -> f64 {
        1.0 / self.n[axis] as f64
    }

    /// Volume of one voxel (area in 2D).
    pub fn voxel_volume(&self) -> f64 {
        (0..self.dim).map(|d| self.h(d)).product()
    }

    /// Measure of a face normal to `axis`.
    pub fn face_area(&self, axis: usize) -> f64 {
        (0..self.dim).filter(|&d| d != axis).map(|d| self.h(d)).product()
    }

    #[inline]
    pub fn index(&self, c: [usize; 3]) -> usize {
        c[0] + self.n[0] * (c[1] + self.n[1] * c[2])
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.n[0];
        let j = (idx / self.n[0]) % self.n[1];
        let k = idx / (self.n[0] * self.n[1]);
        [i, j, k]
    }

    pub fn center(&self, c: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = (c[d] as f64 + 0.5) * self.h(d);
        }
        x
    }

    /// Neighbor of voxel `c` one step along `axis` in direction `step` (+1 or
    /// -1), wrapping periodic axes.
    #[inline]
    pub fn neighbor(&self, c: [usize; 3], axis: usize, step: isize) -> Option<[usize; 3]> {
        let n = self.n[axis];
        let mut out = c;
        if step > 0 {
            if c[axis] + 1 < n {
                out[axis] += 1;
            } else if self.periodic[axis] {
                out[axis] = 0;
            } else {
                return None;
            }
        } else if c[axis] > 0 {
            out[axis] -= 1;
        } else if self.periodic[axis] {
            out[axis] = n - 1;
        } else {
            return None;
        }
        Some(out)
    }

    /// Shape of the face array for faces normal to `axis`.
    pub fn face_shape(&self, axis: usize) -> [usize; 3] {
        let mut s = self.n;
        if !self.periodic[axis] {
            s[axis] += 1;
        }
        s
    }

    pub fn face_count(&self, axis: usize) -> usize {
        let s = self.face_shape(axis);
        s[0] * s[1] * s[2]
    }

    #[inline]
    pub fn face_index(&self, axis: usize, c: [usize; 3]) -> usize {
        let s = self.face_shape(axis);
        c[0] + s[0] * (c[1] + s[1] * c[2])
    }

    #[inline]
    pub fn face_coords(&self, axis: usize, idx: usize) -> [usize; 3] {
        let s = self.face_shape(axis);
        let i = idx % s[0];
        let j = (idx / s[0]) % s[1];
        let k = idx / (s[0] * s[1]);
        [i, j, k]
    }

    /// Voxels on the low and high side of a face. `None` marks the outside of
    /// a non-periodic boundary.
    #[inline]
    pub fn face_voxels(&self, axis: usize, c: [usize; 3]) -> (Option<[usize; 3]>, Option<[usize; 3]>) {
        let high = if c[axis] < self.n[axis] { Some(c) } else { None };
        let low = if c[axis] > 0 {
            let mut l = c;
            l[axis] -= 1;
            Some(l)
        } else if self.periodic[axis] {
            let mut l = c;
            l[axis] = self.n[axis] - 1;
            Some(l)
        } else {
            None
        };
        (low, high)
    }

    /// Face on the low (`step < 0`) or high side of voxel `c` normal to `axis`.
    #[inline]
    pub fn voxel_face(&self, c: [usize; 3], axis: usize, step: isize) -> [usize; 3] {
        if step < 0 {
            c
        } else {
            let mut f = c;
            f[axis] += 1;
            if f[axis] == self.n[axis] && self.periodic[axis] {
                f[axis] = 0;
            }
            f
        }
    }

    /// Position of the center of a face.
    pub fn face_center(&self, axis: usize, c: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = if d == axis {
                c[d] as f64 * self.h(d)
            } else {
                (c[d] as f64 + 0.5) * self.h(d)
            };
        }
        x
    }
}
