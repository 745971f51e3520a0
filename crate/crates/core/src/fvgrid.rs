//! Vertex-centered finite volumes on structured boxes.
//!
//! Unknowns sit at grid nodes; control volumes are the dual boxes, truncated
//! at the domain boundary. Each element contributes subface fluxes between
//! pairs of nodes joined by an edge. The diagonal tensor part uses the
//! two-point difference along the edge; off-diagonal parts use the
//! element-averaged difference in the other axis. The resulting operator is
//! symmetric for constant tensors and exact for linear fields.

use nalgebra::DMatrix;

/// Structured node grid of dimension 1 to 3 with `n[a]` elements per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeGrid {
    dim: usize,
    n: [usize; 3],
    h: [f64; 3],
    origin: [f64; 3],
}

/// Gauss-Legendre points on [-1/2, 1/2].
const GAUSS: [f64; 2] = [-0.288_675_134_594_812_9, 0.288_675_134_594_812_9];

impl NodeGrid {
    /// Grid on the box `origin + [0, extent]` with `n` elements per axis.
    pub fn new(origin: &[f64], extent: &[f64], n: &[usize]) -> Self {
        let dim = n.len();
        assert!((1..=3).contains(&dim) && origin.len() == dim && extent.len() == dim);
        let mut nn = [0; 3];
        let mut h = [0.0; 3];
        let mut o = [0.0; 3];
        for a in 0..dim {
            assert!(n[a] >= 1);
            nn[a] = n[a];
            h[a] = extent[a] / n[a] as f64;
            o[a] = origin[a];
        }
        Self {
            dim,
            n: nn,
            h,
            origin: o,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn elements_per_axis(&self) -> [usize; 3] {
        self.n
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.h[axis]
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    /// Nodes per axis (1 for unused axes).
    pub fn nodes_per_axis(&self) -> [usize; 3] {
        let mut s = [1; 3];
        for a in 0..self.dim {
            s[a] = self.n[a] + 1;
        }
        s
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis().iter().product()
    }

    pub fn element_count(&self) -> usize {
        (0..self.dim).map(|a| self.n[a]).product()
    }

    #[inline]
    pub fn node_index(&self, c: [usize; 3]) -> usize {
        let s = self.nodes_per_axis();
        c[0] + s[0] * (c[1] + s[1] * c[2])
    }

    #[inline]
    pub fn node_coords(&self, idx: usize) -> [usize; 3] {
        let s = self.nodes_per_axis();
        [idx % s[0], (idx / s[0]) % s[1], idx / (s[0] * s[1])]
    }

    pub fn node_position(&self, idx: usize) -> [f64; 3] {
        let c = self.node_coords(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.origin[a] + c[a] as f64 * self.h[a];
        }
        x
    }

    /// Low corner of element `e` in node coordinates.
    #[inline]
    pub fn element_corner(&self, e: usize) -> [usize; 3] {
        let mut s = [1; 3];
        for a in 0..self.dim {
            s[a] = self.n[a];
        }
        [e % s[0], (e / s[0]) % s[1], e / (s[0] * s[1])]
    }

    pub fn element_center(&self, e: usize) -> [f64; 3] {
        let c = self.element_corner(e);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.origin[a] + (c[a] as f64 + 0.5) * self.h[a];
        }
        x
    }

    /// Half-width of the dual cell of `c` on each side along `axis`.
    fn dual_extent(&self, c: [usize; 3], axis: usize) -> (f64, f64) {
        let lo = if c[axis] > 0 { 0.5 * self.h[axis] } else { 0.0 };
        let hi = if c[axis] < self.n[axis] { 0.5 * self.h[axis] } else { 0.0 };
        (lo, hi)
    }

    /// Measure of the dual cell of a node.
    pub fn dual_volume(&self, idx: usize) -> f64 {
        let c = self.node_coords(idx);
        (0..self.dim)
            .map(|a| {
                let (lo, hi) = self.dual_extent(c, a);
                lo + hi
            })
            .product()
    }

    /// Integral of `f` over the dual cell of a node, two Gauss points per
    /// axis on each half of the cell.
    pub fn integrate_dual(&self, idx: usize, f: &dyn Fn(&[f64; 3]) -> f64) -> f64 {
        let c = self.node_coords(idx);
        let x0 = self.node_position(idx);
        // per axis list of (point, weight)
        let mut rules: Vec<Vec<(f64, f64)>> = Vec::with_capacity(self.dim);
        for a in 0..self.dim {
            let (lo, hi) = self.dual_extent(c, a);
            let mut r = Vec::with_capacity(4);
            for (len, center) in [(lo, x0[a] - 0.5 * lo), (hi, x0[a] + 0.5 * hi)] {
                if len > 0.0 {
                    for g in GAUSS {
                        r.push((center + g * len, 0.5 * len));
                    }
                }
            }
            rules.push(r);
        }
        let mut sum = 0.0;
        let mut x = x0;
        let r1 = if self.dim > 1 { rules[1].clone() } else { vec![(0.0, 1.0)] };
        let r2 = if self.dim > 2 { rules[2].clone() } else { vec![(0.0, 1.0)] };
        for &(p0, w0) in &rules[0] {
            x[0] = p0;
            for &(p1, w1) in &r1 {
                if self.dim > 1 {
                    x[1] = p1;
                }
                for &(p2, w2) in &r2 {
                    if self.dim > 2 {
                        x[2] = p2;
                    }
                    sum += w0 * w1 * w2 * f(&x);
                }
            }
        }
        sum
    }

    /// Area of one subface normal to `axis` inside an element.
    fn subface_area(&self, axis: usize) -> f64 {
        (0..self.dim).filter(|&b| b != axis).map(|b| 0.5 * self.h[b]).product()
    }

    /// Visits every element; `corners(mask)` returns the node index of the
    /// corner with offsets given by the bits of `mask`.
    fn for_each_element(&self, mut f: impl FnMut(&dyn Fn(usize) -> usize)) {
        for e in 0..self.element_count() {
            let c = self.element_corner(e);
            let corner = |m: usize| {
                let mut cc = c;
                for a in 0..self.dim {
                    if m & (1 << a) != 0 {
                        cc[a] += 1;
                    }
                }
                self.node_index(cc)
            };
            f(&corner);
        }
    }

    /// Assembles `sum over dual faces of -(K grad p) . n` as a matrix via
    /// `add(row, col, value)`. `k` must be `dim x dim`.
    pub fn stiffness(&self, k: &DMatrix<f64>, mut add: impl FnMut(usize, usize, f64)) {
        assert_eq!(k.shape(), (self.dim, self.dim));
        let d = self.dim;
        let nsub = 1usize << (d - 1);
        self.for_each_element(|corner| {
            for a in 0..d {
                let area = self.subface_area(a);
                let w = k[(a, a)] * area / self.h[a];
                for m in 0..(1usize << d) {
                    if m & (1 << a) != 0 {
                        continue;
                    }
                    let i = corner(m);
                    let j = corner(m | (1 << a));
                    if w != 0.0 {
                        add(i, i, w);
                        add(j, j, w);
                        add(i, j, -w);
                        add(j, i, -w);
                    }
                    for b in 0..d {
                        if b == a || k[(a, b)] == 0.0 {
                            continue;
                        }
                        // flux i -> j picks up -K_ab times the averaged b-difference
                        let om = k[(a, b)] * area / (nsub as f64 * self.h[b]);
                        for mb in 0..(1usize << d) {
                            if mb & (1 << b) != 0 {
                                continue;
                            }
                            let qlo = corner(mb);
                            let qhi = corner(mb | (1 << b));
                            add(i, qhi, -om);
                            add(i, qlo, om);
                            add(j, qhi, om);
                            add(j, qlo, -om);
                        }
                    }
                }
            }
        });
    }

    /// Volume flux `-(K grad p) . e_a` through the dual faces of every edge,
    /// in the positive axis direction.
    pub fn edge_fluxes(&self, k: &DMatrix<f64>, p: &[f64]) -> EdgeField {
        let d = self.dim;
        let nsub = 1usize << (d - 1);
        let mut out = EdgeField::zeros(self);
        self.for_each_element(|corner| {
            for a in 0..d {
                let area = self.subface_area(a);
                let mut cross = 0.0;
                for b in 0..d {
                    if b == a || k[(a, b)] == 0.0 {
                        continue;
                    }
                    let mut diff = 0.0;
                    for mb in 0..(1usize << d) {
                        if mb & (1 << b) == 0 {
                            diff += p[corner(mb | (1 << b))] - p[corner(mb)];
                        }
                    }
                    cross += k[(a, b)] * diff / (nsub as f64 * self.h[b]);
                }
                for m in 0..(1usize << d) {
                    if m & (1 << a) != 0 {
                        continue;
                    }
                    let i = corner(m);
                    let j = corner(m | (1 << a));
                    let grad = (p[j] - p[i]) / self.h[a];
                    out.values[a][i] -= (k[(a, a)] * grad + cross) * area;
                }
            }
        });
        out
    }

    /// Element-averaged gradient of a nodal field.
    pub fn element_gradients(&self, p: &[f64]) -> Vec<[f64; 3]> {
        let d = self.dim;
        let nsub = 1usize << (d - 1);
        let mut out = vec![[0.0; 3]; self.element_count()];
        let mut e = 0;
        self.for_each_element(|corner| {
            for a in 0..d {
                let mut diff = 0.0;
                for m in 0..(1usize << d) {
                    if m & (1 << a) == 0 {
                        diff += p[corner(m | (1 << a))] - p[corner(m)];
                    }
                }
                out[e][a] = diff / (nsub as f64 * self.h[a]);
            }
            e += 1;
        });
        out
    }

    /// Indices of the nodes with the given coordinate along `axis`.
    pub fn layer(&self, axis: usize, k: usize) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&i| self.node_coords(i)[axis] == k)
            .collect()
    }

    /// The grid formed by the first `dim - 1` axes (the trace on a face
    /// normal to the last axis).
    pub fn trace(&self) -> NodeGrid {
        assert!(self.dim >= 2);
        let m = self.dim - 1;
        let extent: Vec<f64> = (0..m).map(|a| self.h[a] * self.n[a] as f64).collect();
        NodeGrid::new(&self.origin[..m], &extent, &self.n[..m])
    }
}

/// Per-edge scalar, stored at the low node of each edge, one array per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeField {
    pub values: Vec<Vec<f64>>,
}

impl EdgeField {
    pub fn zeros(grid: &NodeGrid) -> Self {
        Self {
            values: vec![vec![0.0; grid.node_count()]; grid.dim()],
        }
    }

    /// Fluxes of a constant velocity through the dual faces.
    pub fn from_velocity(grid: &NodeGrid, v: &[f64]) -> Self {
        let k = DMatrix::<f64>::identity(grid.dim(), grid.dim());
        // a linear potential with gradient -v reproduces v exactly
        let p: Vec<f64> = (0..grid.node_count())
            .map(|i| {
                let x = grid.node_position(i);
                -(0..grid.dim()).map(|a| v[a] * (x[a] - grid.origin()[a])).sum::<f64>()
            })
            .collect();
        grid.edge_fluxes(&k, &p)
    }

    pub fn scaled(mut self, s: f64) -> Self {
        for v in &mut self.values {
            v.iter_mut().for_each(|x| *x *= s);
        }
        self
    }

    /// Net outflow of every node's dual cell.
    pub fn divergence(&self, grid: &NodeGrid) -> Vec<f64> {
        let mut div = vec![0.0; grid.node_count()];
        let s = grid.nodes_per_axis();
        for a in 0..grid.dim() {
            for i in 0..grid.node_count() {
                let c = grid.node_coords(i);
                if c[a] + 1 < s[a] {
                    let mut cj = c;
                    cj[a] += 1;
                    let j = grid.node_index(cj);
                    let f = self.values[a][i];
                    div[i] += f;
                    div[j] -= f;
                }
            }
        }
        div
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::TripletBuilder;

    fn assemble(grid: &NodeGrid, k: &DMatrix<f64>) -> crate::linalg::CsrMatrix {
        let n = grid.node_count();
        let mut t = TripletBuilder::new(n, n);
        grid.stiffness(k, |i, j, v| t.push(i, j, v));
        t.build()
    }

    #[test]
    fn symmetric_and_conservative() {
        for (grid, k) in [
            (
                NodeGrid::new(&[0.0, -1.0], &[1.0, 1.0], &[5, 4]),
                DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            ),
            (
                NodeGrid::new(&[0.0, 0.0, -1.0], &[1.0, 2.0, 1.0], &[3, 4, 2]),
                DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.2, 0.3, 1.0, 0.1, -0.2, 0.1, 1.5]),
            ),
        ] {
            let a = assemble(&grid, &k);
            assert!(a.asymmetry() < 1e-14);
            assert!(a.row_sums().iter().all(|s| s.abs() < 1e-12));
        }
    }

    #[test]
    fn exact_for_linear_fields() {
        let grid = NodeGrid::new(&[0.0, 0.0, -1.0], &[1.0, 1.0, 1.0], &[3, 3, 4]);
        let k = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.2, 0.3, 1.0, 0.1, -0.2, 0.1, 1.5]);
        let g = [0.7, -1.1, 0.4];
        let p: Vec<f64> = (0..grid.node_count())
            .map(|i| {
                let x = grid.node_position(i);
                g[0] * x[0] + g[1] * x[1] + g[2] * x[2]
            })
            .collect();
        let a = assemble(&grid, &k);
        let r = a.mul_vec(&p);
        // interior nodes carry no net flux
        for i in 0..grid.node_count() {
            let c = grid.node_coords(i);
            let interior = (0..3).all(|d| c[d] > 0 && c[d] < grid.elements_per_axis()[d]);
            if interior {
                assert!(r[i].abs() < 1e-12);
            }
        }
        let flux = grid.edge_fluxes(&k, &p);
        for (x, y) in r.iter().zip(flux.divergence(&grid)) {
            assert!((x - y).abs() < 1e-12);
        }
        let kg = &k * nalgebra::DVector::from_row_slice(&g);
        // an interior x-edge has dual face area hy * hz
        let i = grid.node_index([1, 1, 1]);
        let area = grid.h(1) * grid.h(2);
        assert!((flux.values[0][i] + kg[0] * area).abs() < 1e-12);
        for gr in grid.element_gradients(&p) {
            for d in 0..3 {
                assert!((gr[d] - g[d]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dual_volumes_tile_the_box() {
        let grid = NodeGrid::new(&[0.0, -2.0], &[3.0, 2.0], &[6, 5]);
        let total: f64 = (0..grid.node_count()).map(|i| grid.dual_volume(i)).sum();
        assert!((total - 6.0).abs() < 1e-12);
        let quad: f64 = (0..grid.node_count())
            .map(|i| grid.integrate_dual(i, &|x| x[0] * x[0] * x[1]))
            .sum();
        // integral of x^2 y over [0,3]x[-2,0] = 9 * (-2)
        assert!((quad + 18.0).abs() < 1e-10);
    }

    #[test]
    fn constant_velocity_is_divergence_free() {
        let grid = NodeGrid::new(&[0.0, -1.0], &[1.0, 1.0], &[4, 4]);
        let f = EdgeField::from_velocity(&grid, &[0.0, 2.0]);
        let div = f.divergence(&grid);
        for i in 0..grid.node_count() {
            let c = grid.node_coords(i);
            if c[1] > 0 && c[1] < 4 {
                assert!(div[i].abs() < 1e-12);
            }
        }
        let i = grid.node_index([1, 2, 0]);
        assert!((f.values[1][i] - 2.0 * 0.25).abs() < 1e-12);
    }
}
