//! Preconditioned Krylov solvers: CG for SPD systems, MINRES for symmetric
//! indefinite saddle-point systems and BiCGSTAB for the nonsymmetric
//! advection-diffusion operators.
//!
//! All three accept an optional projection that removes a known nullspace
//! (piecewise constants on connected components) from the iterates. The
//! projection must be an orthogonal projector that commutes with the
//! preconditioner.

use super::{axpy, dot, norm2, CsrMatrix};
use crate::error::{Error, Result};

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y)
    }
}

pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct IdentityPreconditioner;

impl Preconditioner for IdentityPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Diagonal scaling. Zero diagonal entries are passed through unscaled.
#[derive(Debug, Clone)]
pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(diag: &[f64]) -> Self {
        let inv_diag = diag
            .iter()
            .map(|&d| if d != 0.0 { 1.0 / d.abs() } else { 1.0 })
            .collect();
        Self { inv_diag }
    }

    pub fn from_matrix(a: &CsrMatrix) -> Self {
        Self::new(&a.diagonal())
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), di) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * di;
        }
    }
}

pub type Projection<'a> = &'a dyn Fn(&mut [f64]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 20_000,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// True residual `||b - A x|| / ||b||` recomputed after the iteration.
    pub relative_residual: f64,
}

fn true_residual(a: &dyn LinearOperator, b: &[f64], x: &[f64], project: Option<Projection>) -> f64 {
    let mut r = vec![0.0; b.len()];
    a.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    if let Some(p) = project {
        p(&mut r);
    }
    let bn = norm2(b);
    if bn == 0.0 {
        norm2(&r)
    } else {
        norm2(&r) / bn
    }
}

/// Preconditioned conjugate gradients. `x` holds the initial guess on entry.
pub fn cg(
    a: &dyn LinearOperator,
    b: &[f64],
    x: &mut [f64],
    precond: &dyn Preconditioner,
    opts: SolverOptions,
    project: Option<Projection>,
) -> Result<SolveStats> {
    let n = a.dim();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    if let Some(p) = project {
        p(&mut r);
    }
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    if let Some(p) = project {
        p(&mut z);
    }
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![0.0; n];
    let target = opts.tolerance * bnorm;
    let mut it = 0;
    while norm2(&r) > target {
        if it >= opts.max_iterations {
            return Err(Error::Convergence {
                solver: "cg",
                iterations: it,
                residual: norm2(&r) / bnorm,
            });
        }
        a.apply(&d, &mut q);
        let dq = dot(&d, &q);
        if dq <= 0.0 {
            return Err(Error::SingularSystem(format!(
                "cg encountered non-positive curvature {dq:.3e}"
            )));
        }
        let alpha = rz / dq;
        axpy(alpha, &d, x);
        axpy(-alpha, &q, &mut r);
        if let Some(p) = project {
            p(&mut r);
        }
        precond.apply(&r, &mut z);
        if let Some(p) = project {
            p(&mut z);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (di, zi) in d.iter_mut().zip(&z) {
            *di = zi + beta * *di;
        }
        it += 1;
    }
    if let Some(p) = project {
        p(x);
    }
    Ok(SolveStats {
        iterations: it,
        relative_residual: true_residual(a, b, x, project),
    })
}

/// Preconditioned MINRES (Paige & Saunders) for symmetric, possibly
/// indefinite systems. The preconditioner must be symmetric positive
/// (semi)definite.
pub fn minres(
    a: &dyn LinearOperator,
    b: &[f64],
    x: &mut [f64],
    precond: &dyn Preconditioner,
    opts: SolverOptions,
    project: Option<Projection>,
) -> Result<SolveStats> {
    let n = a.dim();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r1 = vec![0.0; n];
    a.apply(x, &mut r1);
    for (ri, bi) in r1.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut y = vec![0.0; n];
    precond.apply(&r1, &mut y);
    if let Some(p) = project {
        p(&mut y);
    }
    let beta1_sq = dot(&r1, &y);
    if beta1_sq < 0.0 {
        return Err(Error::SingularSystem("indefinite preconditioner".into()));
    }
    let beta1 = beta1_sq.sqrt();
    if beta1 == 0.0 {
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: true_residual(a, b, x, project),
        });
    }
    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w1 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut it = 0;
    let target = opts.tolerance * beta1;
    while phibar > target {
        if it >= opts.max_iterations {
            return Err(Error::Convergence {
                solver: "minres",
                iterations: it,
                residual: phibar / beta1,
            });
        }
        it += 1;
        let s = 1.0 / beta;
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = s * yi;
        }
        a.apply(&v, &mut y);
        if it >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        precond.apply(&r2, &mut y);
        if let Some(p) = project {
            p(&mut y);
        }
        oldb = beta;
        let beta_sq = dot(&r2, &y);
        if beta_sq < 0.0 {
            return Err(Error::SingularSystem("indefinite preconditioner".into()));
        }
        beta = beta_sq.sqrt();
        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;
        std::mem::swap(&mut w1, &mut w2);
        std::mem::swap(&mut w2, &mut w);
        // w1 <- old w2, w2 <- old w
        for i in 0..n {
            w[i] = (v[i] - oldeps * w1[i] - delta * w2[i]) / gamma;
        }
        axpy(phi, &w, x);
        if beta == 0.0 {
            break;
        }
    }
    if let Some(p) = project {
        p(x);
    }
    Ok(SolveStats {
        iterations: it,
        relative_residual: true_residual(a, b, x, project),
    })
}

/// Right-preconditioned BiCGSTAB for nonsymmetric systems.
pub fn bicgstab(
    a: &dyn LinearOperator,
    b: &[f64],
    x: &mut [f64],
    precond: &dyn Preconditioner,
    opts: SolverOptions,
) -> Result<SolveStats> {
    let n = a.dim();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let target = opts.tolerance * bnorm;
    let mut r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut it = 0;
    while norm2(&r) > target {
        if it >= opts.max_iterations {
            return Err(Error::Convergence {
                solver: "bicgstab",
                iterations: it,
                residual: norm2(&r) / bnorm,
            });
        }
        it += 1;
        let mut rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            // restart on breakdown
            r_hat.copy_from_slice(&r);
            rho_new = dot(&r_hat, &r);
            p.iter_mut().for_each(|q| *q = 0.0);
            v.iter_mut().for_each(|q| *q = 0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond.apply(&p, &mut p_hat);
        a.apply(&p_hat, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            return Err(Error::Convergence {
                solver: "bicgstab",
                iterations: it,
                residual: norm2(&r) / bnorm,
            });
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= target {
            axpy(alpha, &p_hat, x);
            r.copy_from_slice(&s);
            break;
        }
        precond.apply(&s, &mut s_hat);
        a.apply(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
    }
    Ok(SolveStats {
        iterations: it,
        relative_residual: true_residual(a, b, x, None),
    })
}
