//! Sparse storage, Krylov solvers and a few dense vector helpers.

pub mod krylov;
mod sparse;

pub use krylov::{
    bicgstab, cg, minres, IdentityPreconditioner, Jacobi, LinearOperator, Preconditioner,
    Projection, SolveStats, SolverOptions,
};
pub use sparse::{CsrMatrix, TripletBuilder};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Subtracts the mean of `v` over each group. `groups[i]` is the group of
/// entry `i`, or `usize::MAX` for entries that are left alone.
pub fn project_group_means(v: &mut [f64], groups: &[usize], n_groups: usize) {
    let mut sum = vec![0.0; n_groups];
    let mut count = vec![0usize; n_groups];
    for (x, &g) in v.iter().zip(groups) {
        if g != usize::MAX {
            sum[g] += x;
            count[g] += 1;
        }
    }
    for (s, &c) in sum.iter_mut().zip(&count) {
        if c > 0 {
            *s /= c as f64;
        }
    }
    for (x, &g) in v.iter_mut().zip(groups) {
        if g != usize::MAX {
            *x -= sum[g];
        }
    }
}
