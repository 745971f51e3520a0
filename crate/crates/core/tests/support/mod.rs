//! Problem setups shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tissue_homog::diffusion::PhaseAverages;
use tissue_homog::field::{Field, TimeField};
use tissue_homog::fvgrid::EdgeField;
use tissue_homog::linalg::SolverOptions;
use tissue_homog::macro_flow::*;
use tissue_homog::macro_oxygen::*;

pub fn tight() -> SolverOptions {
    SolverOptions {
        tolerance: 1e-13,
        max_iterations: 100_000,
    }
}

/// Observed orders between consecutive halvings.
pub fn rates(errs: &[f64]) -> Vec<f64> {
    errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

pub fn eye(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

// exact fields for the manufactured flow problem, Omega = (0,1) x (-1,0)
fn pa(x: &[f64; 3]) -> f64 {
    (PI * x[0]).cos() * x[1].exp()
}
fn pv(x: &[f64; 3]) -> f64 {
    (PI * x[0]).cos() * (1.0 + x[1] + x[1] * x[1])
}

pub struct FlowMms {
    pub ka: [f64; 2],
    pub kv: [f64; 2],
    pub ks: f64,
    /// Weight of the skin operator: 2 for Case 1, 1 for the Case 2 limit.
    pub factor: f64,
}

impl FlowMms {
    pub fn new(factor: f64) -> Self {
        Self {
            ka: [0.7, 1.3],
            kv: [1.1, 0.4],
            ks: 0.5,
            factor,
        }
    }

    pub fn problem(&self, case: FlowCase) -> MacroFlowProblem {
        let (ka, kv, ks, c) = (self.ka, self.kv, self.ks, self.factor);
        let sources = FlowSources {
            // -div(K grad p)
            artery: Some(Arc::new(move |x: &[f64; 3]| {
                let cx = (PI * x[0]).cos();
                -(-ka[0] * PI * PI * cx * x[1].exp() + ka[1] * cx * x[1].exp())
            })),
            vein: Some(Arc::new(move |x: &[f64; 3]| {
                let cx = (PI * x[0]).cos();
                -(-kv[0] * PI * PI * cx * (1.0 + x[1] + x[1] * x[1]) + kv[1] * cx * 2.0)
            })),
            // -c div(K grad p_hat) + sum K_l dp_l/dz at z = 0
            surface: Some(Arc::new(move |x: &[f64; 3]| {
                let cx = (PI * x[0]).cos();
                c * ks * PI * PI * cx + ka[1] * cx + kv[1] * cx
            })),
        };
        MacroFlowProblem::new(
            case,
            DMatrix::from_diagonal(&DVector::from_row_slice(&ka)),
            DMatrix::from_diagonal(&DVector::from_row_slice(&kv)),
            DMatrix::from_element(1, 1, ks),
            Field::function(pa),
            Field::function(pv),
        )
        .with_sources(sources)
        .with_solver(tight())
    }

    pub fn l2_error(&self, n: usize, case: FlowCase) -> f64 {
        let dom = MacroDomain::new(&[1.0], 1.0, &[n, n]).unwrap();
        let sol = solve_flow(&dom, &self.problem(case)).unwrap();
        let g = dom.bulk_grid();
        let mut e = 0.0;
        for i in 0..g.node_count() {
            let x = g.node_position(i);
            let w = g.dual_volume(i);
            e += w * ((sol.p_artery[i] - pa(&x)).powi(2) + (sol.p_vein[i] - pv(&x)).powi(2));
        }
        e.sqrt()
    }
}

/// Skin trace errors of the slab flow model against the limit model for
/// delta = 0.2, 0.1, 0.05, plus whether every slab solve was compatible.
pub fn slab_flow_errors() -> (Vec<f64>, bool) {
    let kt = DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.0, 0.3]);
    let ka = eye(2);
    let kv = eye(2) * 0.5;
    let pa0 = Field::function(|x| 1.0 + 0.5 * (PI * x[0]).cos());
    let pv0 = Field::function(|x| -0.3 * (2.0 * PI * x[0]).cos());
    let base = MacroDomain::new(&[1.0], 1.0, &[32, 16]).unwrap();
    let limit = solve_case2_limit(
        &base,
        &MacroFlowProblem::new(FlowCase::Case2Limit, ka.clone(), kv.clone(), kt.clone(), pa0.clone(), pv0.clone())
            .with_solver(tight()),
    )
    .unwrap();
    let surf = base.surface_grid();
    let mut errs = Vec::new();
    let mut compatible = true;
    for delta in [0.2, 0.1, 0.05] {
        let dom = base.clone().with_slab(delta, 8).unwrap();
        let sol = solve_case2_intermediate(
            &dom,
            &MacroFlowProblem::new(FlowCase::Case2Intermediate, ka.clone(), kv.clone(), kt.clone(), pa0.clone(), pv0.clone())
                .with_solver(tight()),
        )
        .unwrap();
        compatible &= sol.diagnostics.compatible(1e-8);
        let e: f64 = (0..surf.node_count())
            .map(|s| surf.dual_volume(s) * (sol.p_skin[s] - limit.p_skin[s]).powi(2))
            .sum::<f64>()
            .sqrt();
        errs.push(e);
    }
    (errs, compatible)
}

/// Largest deviation from the antisymmetric closed form over the three
/// cases: pressures, skin pressure, vertical flux, and the worst relative
/// flux imbalance on the interface.
pub fn antisymmetric_deviation(dim: usize) -> (f64, f64) {
    let p = 2.0;
    let l = 1.5;
    let (extent, cells): (Vec<f64>, Vec<usize>) = if dim == 2 {
        (vec![1.0], vec![6, 5])
    } else {
        (vec![1.0, 1.0], vec![4, 3, 6])
    };
    let dom = MacroDomain::new(&extent, l, &cells).unwrap().with_slab(0.2, 8).unwrap();
    let mut dev: f64 = 0.0;
    let mut imbalance: f64 = 0.0;
    for case in [FlowCase::Case1, FlowCase::Case2Intermediate, FlowCase::Case2Limit] {
        let prob = MacroFlowProblem::new(case, eye(dim), eye(dim), eye(dim), p, -p).with_solver(tight());
        let sol = solve_flow(&dom, &prob).unwrap();
        let bulk = dom.bulk_grid();
        for i in 0..bulk.node_count() {
            let z = bulk.node_position(i)[dim - 1];
            dev = dev.max((sol.p_artery[i] + p * z / l).abs());
            dev = dev.max((sol.p_vein[i] - p * z / l).abs());
        }
        dev = sol.p_skin.iter().chain(sol.p_slab.iter().flatten()).fold(dev, |m, x| m.max(x.abs()));
        let surf = dom.surface_grid();
        for s in 0..surf.node_count() {
            let q = sol.interface_flux_artery[s] / surf.dual_volume(s);
            dev = dev.max((q - p / l).abs());
        }
        let d = sol.diagnostics;
        imbalance = imbalance.max(d.interface_imbalance / d.flux_scale);
    }
    (dev, imbalance)
}

pub fn coefficients(dim: usize, decay: f64) -> OxygenCoefficients {
    let eye = eye(dim);
    OxygenCoefficients {
        theta: [0.2, 0.15, 0.65],
        gamma: [1.5, 1.2],
        lambda: [0.8, 0.6],
        a_artery: &eye * 0.3,
        a_vein: &eye * 0.25,
        a_tissue: &eye * 0.5,
        skin: SkinCoefficients {
            theta_blood: 0.4,
            theta_tissue: 0.6,
            a_blood: &eye * 0.2,
            a_tissue: &eye * 0.4,
            exchange: 0.7,
        },
        decay_bulk: PhaseAverages::constant(decay),
        decay_skin: PhaseAverages::constant(decay),
    }
}

/// Uniform data 1 everywhere, no flow.
pub fn base_problem(dom: &MacroDomain, case: FlowCase, decay: f64) -> OxygenProblem {
    OxygenProblem {
        domain: dom.clone(),
        case,
        coefficients: coefficients(dom.dim(), decay),
        fluxes: TransportFluxes::zero(dom, case),
        dirichlet_artery: 1.0.into(),
        dirichlet_vein: 1.0.into(),
        dirichlet_bottom: true,
        initial: InitialData::uniform(1.0),
        sources: OxygenSources::default(),
    }
}

/// Max-norm errors at t = 1 of a spatially constant manufactured solution
/// for dt = 0.1, 0.05, 0.025, 0.0125.
pub fn oxygen_time_errors() -> Vec<f64> {
    let cb = |t: f64| 1.0 + 0.5 * (2.0 * t).sin();
    let dcb = |t: f64| (2.0 * t).cos();
    let ct = |t: f64| 1.0 + 0.5 * t.cos();
    let dct = |t: f64| -0.5 * t.sin();
    let dom = MacroDomain::new(&[1.0], 1.0, &[4, 4]).unwrap();
    let d = 0.4;
    let mut prob = base_problem(&dom, FlowCase::Case1, d);
    prob.dirichlet_bottom = false;
    let c = prob.coefficients.clone();
    let (th, g, l, sk) = (c.theta, c.gamma, c.lambda, c.skin.clone());
    prob.sources = OxygenSources {
        artery: Some(Arc::new(move |_, t| th[0] * dcb(t) - l[0] * g[0] * (ct(t) - cb(t)))),
        vein: Some(Arc::new(move |_, t| th[1] * dcb(t) - l[1] * g[1] * (ct(t) - cb(t)))),
        tissue: Some(Arc::new(move |_, t| {
            th[2] * dct(t) - (l[0] * g[0] + l[1] * g[1]) * (cb(t) - ct(t)) + th[2] * d * ct(t)
        })),
        skin_blood: Some(Arc::new({
            let sk = sk.clone();
            move |_, t| sk.theta_blood * dcb(t) - sk.exchange * (ct(t) - cb(t))
        })),
        skin_tissue: Some(Arc::new(move |_, t| {
            sk.theta_tissue * dct(t) - sk.exchange * (cb(t) - ct(t)) + sk.theta_tissue * d * ct(t)
        })),
    };
    prob.initial = InitialData {
        artery: cb(0.0).into(),
        vein: cb(0.0).into(),
        tissue: ct(0.0).into(),
        skin_blood: cb(0.0).into(),
        skin_tissue: ct(0.0).into(),
    };
    [0.1, 0.05, 0.025, 0.0125]
        .iter()
        .map(|&dt| {
            let cfg = StepperConfig {
                solver: tight(),
                ..StepperConfig::new(dt, 1.0)
            };
            let last = run_transient(&prob, &cfg).unwrap().pop().unwrap();
            let t = last.time;
            last.artery
                .iter()
                .map(|v| (v - cb(t)).abs())
                .chain(last.tissue.iter().map(|v| (v - ct(t)).abs()))
                .fold(0.0, f64::max)
        })
        .collect()
}

fn ca(x: &[f64; 3]) -> f64 {
    2.0 + (PI * x[0]).cos() * (0.5 * PI * x[1]).cos()
}
fn cv(x: &[f64; 3]) -> f64 {
    2.0 + (PI * x[0]).cos() * (1.0 + x[1])
}
fn cs(x: &[f64; 3]) -> f64 {
    1.0 + 0.5 * (PI * x[0]).cos() * (PI * x[1]).cos()
}
fn chat(x: &[f64; 3]) -> f64 {
    2.0 + (PI * x[0]).cos()
}
fn chat_s(x: &[f64; 3]) -> f64 {
    1.0 + 0.5 * (PI * x[0]).cos()
}

/// Steady manufactured oxygen problem with vertical advection of speed `p`.
pub struct OxygenMms {
    pub p: f64,
}

impl OxygenMms {
    pub fn problem(&self, n: usize, d: f64) -> OxygenProblem {
        let dom = MacroDomain::new(&[1.0], 1.0, &[n, n]).unwrap();
        let mut prob = base_problem(&dom, FlowCase::Case1, d);
        let bulk = dom.bulk_grid();
        prob.fluxes.artery = EdgeField::from_velocity(&bulk, &[0.0, self.p]);
        prob.fluxes.vein = EdgeField::from_velocity(&bulk, &[0.0, -self.p]);
        prob.dirichlet_artery = TimeField::function(|x, _| ca(x));
        prob.dirichlet_vein = TimeField::function(|x, _| cv(x));
        let c = prob.coefficients.clone();
        let aa = c.a_artery[(0, 0)];
        let av = c.a_vein[(0, 0)];
        let at = c.a_tissue[(0, 0)];
        let (ab, ats, r) = (c.skin.a_blood[(0, 0)], c.skin.a_tissue[(0, 0)], c.skin.exchange);
        let (th, g, l) = (c.theta, c.gamma, c.lambda);
        let ths = c.skin.theta_tissue;
        let p = self.p;
        prob.sources = OxygenSources {
            artery: Some(Arc::new(move |x, _| {
                let cx = (PI * x[0]).cos();
                let lap = -(PI * PI + PI * PI / 4.0) * cx * (0.5 * PI * x[1]).cos();
                let dz = -0.5 * PI * cx * (0.5 * PI * x[1]).sin();
                -aa * lap + p * dz - l[0] * g[0] * (cs(x) - ca(x))
            })),
            vein: Some(Arc::new(move |x, _| {
                let cx = (PI * x[0]).cos();
                let lap = -PI * PI * cx * (1.0 + x[1]);
                -av * lap - p * cx - l[1] * g[1] * (cs(x) - cv(x))
            })),
            tissue: Some(Arc::new(move |x, _| {
                let lap = -PI * PI * (PI * x[0]).cos() * (PI * x[1]).cos();
                -at * lap - l[0] * g[0] * (ca(x) - cs(x)) - l[1] * g[1] * (cv(x) - cs(x)) + th[2] * d * cs(x)
            })),
            skin_blood: Some(Arc::new(move |x, _| {
                let cx = (PI * x[0]).cos();
                ab * PI * PI * cx - r * (chat_s(x) - chat(x)) + av * cx
            })),
            skin_tissue: Some(Arc::new(move |x, _| {
                let cx = (PI * x[0]).cos();
                ats * 0.5 * PI * PI * cx - r * (chat(x) - chat_s(x)) + ths * d * chat_s(x)
            })),
        };
        prob
    }

    pub fn error(&self, n: usize) -> f64 {
        let prob = self.problem(n, 0.3);
        let s = steady_state(&prob, 0.0, tight()).unwrap();
        let bulk = prob.domain.bulk_grid();
        let surf = prob.domain.surface_grid();
        let mut e = 0.0;
        for i in 0..bulk.node_count() {
            let x = bulk.node_position(i);
            let w = bulk.dual_volume(i);
            e += w * ((s.artery[i] - ca(&x)).powi(2) + (s.vein[i] - cv(&x)).powi(2) + (s.tissue[i] - cs(&x)).powi(2));
        }
        for i in 0..surf.node_count() {
            let x = surf.node_position(i);
            let w = surf.dual_volume(i);
            e += w * ((s.skin_blood[i] - chat(&x)).powi(2) + (s.skin_tissue[i] - chat_s(&x)).powi(2));
        }
        e.sqrt()
    }
}

/// Flow from random pressures and permeabilities.
pub fn random_flow(rng: &mut ChaCha8Rng, dom: &MacroDomain, case: FlowCase) -> MacroFlowSolution {
    let d = dom.dim();
    let diag = |rng: &mut ChaCha8Rng, n: usize| DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.gen_range(0.2..2.0)));
    let ka = diag(rng, d);
    let kv = diag(rng, d);
    let ks = diag(rng, d);
    let (a0, a1, v0, v1) = (
        rng.gen_range(0.5..2.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-2.0..-0.5),
        rng.gen_range(-1.0..1.0),
    );
    let prob = MacroFlowProblem::new(
        case,
        ka,
        kv,
        ks,
        Field::function(move |x| a0 + a1 * (PI * x[0]).cos()),
        Field::function(move |x| v0 + v1 * (PI * x[0]).sin()),
    )
    .with_solver(tight());
    solve_flow(dom, &prob).unwrap()
}

/// Smallest value and largest value relative to the data bound over
/// `trials` random bounded nonnegative data sets.
pub fn max_principle_extremes(trials: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for trial in 0..trials {
        let case = [FlowCase::Case1, FlowCase::Case2Intermediate, FlowCase::Case2Limit][trial % 3];
        let dom = MacroDomain::new(&[1.0], 1.0, &[10, 8]).unwrap().with_slab(0.1, 8).unwrap();
        let flow = random_flow(&mut rng, &dom, case);
        let mut prob = base_problem(&dom, case, rng.gen_range(0.0..1.0));
        prob.fluxes = TransportFluxes::from_flow(&flow);
        let amax: f64 = rng.gen_range(0.5..3.0);
        let (da, dv) = (rng.gen_range(0.0..amax), rng.gen_range(0.0..amax));
        prob.dirichlet_artery = da.into();
        prob.dirichlet_vein = dv.into();
        let seeds: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..amax)).collect();
        let f = |s: f64, k: f64| Field::function(move |x| s * (0.5 + 0.5 * (k * x[0] + 3.0 * x[1]).sin()));
        prob.initial = InitialData {
            artery: f(seeds[0], 2.0),
            vein: f(seeds[1], 5.0),
            tissue: f(seeds[2], 7.0),
            skin_blood: f(seeds[3], 3.0),
            skin_tissue: f(seeds[4], 4.0),
        };
        let dt = [0.01, 0.1, 1.0][trial % 3];
        let cfg = StepperConfig {
            solver: tight(),
            ..StepperConfig::new(dt, 20.0 * dt)
        };
        for s in run_transient(&prob, &cfg).unwrap() {
            lo = lo.min(s.min());
            hi = hi.max(s.max() / amax);
        }
    }
    (lo, hi)
}

/// Largest relative per-step change of the weighted mass in a closed
/// system with zero decay and a nonzero skin flux.
pub fn closed_mass_drift() -> f64 {
    // conservative upwinding keeps the weighted mass even for a flux field
    // that is not divergence free, here the skin flux alone
    let dom = MacroDomain::new(&[1.0], 1.0, &[8, 8]).unwrap();
    let flow = solve_case1(
        &dom,
        &MacroFlowProblem::new(
            FlowCase::Case1,
            eye(2),
            eye(2),
            eye(1),
            Field::function(|x| (PI * x[0]).cos()),
            Field::function(|x| -(PI * x[0]).cos()),
        )
        .with_solver(tight()),
    )
    .unwrap();
    let mut prob = base_problem(&dom, FlowCase::Case1, 0.0);
    prob.fluxes = TransportFluxes::from_flow(&flow);
    let bulk = dom.bulk_grid();
    for f in [&mut prob.fluxes.artery, &mut prob.fluxes.vein] {
        *f = EdgeField::zeros(&bulk);
    }
    prob.dirichlet_bottom = false;
    prob.initial.skin_blood = Field::function(|x| 1.0 + x[0]);
    prob.initial.tissue = Field::function(|x| 0.5 - 0.3 * x[1]);
    let cfg = StepperConfig {
        solver: tight(),
        ..StepperConfig::new(0.05, 1.0)
    };
    let traj = run_transient(&prob, &cfg).unwrap();
    let masses: Vec<f64> = traj.iter().map(|s| prob.total_mass(s).unwrap()).collect();
    masses
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / w[0].abs())
        .fold(0.0, f64::max)
}

/// Largest change of a uniform equilibrium over a few steps in every case.
pub fn equilibrium_drift() -> f64 {
    let dom = MacroDomain::new(&[1.0], 1.0, &[6, 5]).unwrap().with_slab(0.1, 4).unwrap();
    let mut drift: f64 = 0.0;
    for case in [FlowCase::Case1, FlowCase::Case2Intermediate, FlowCase::Case2Limit] {
        let prob = base_problem(&dom, case, 0.0);
        for s in run_transient(&prob, &StepperConfig::new(0.1, 1.0)).unwrap() {
            drift = drift.max((s.max() - 1.0).abs()).max((s.min() - 1.0).abs());
        }
    }
    drift
}

/// Skin blood trace errors of the slab oxygen model against the limit
/// model for delta = 0.2, 0.1, 0.05.
pub fn slab_oxygen_errors() -> Vec<f64> {
    let base = MacroDomain::new(&[1.0], 1.0, &[24, 12]).unwrap();
    let ka = eye(2);
    let ks = DMatrix::from_row_slice(2, 2, &[0.6, 0.0, 0.0, 0.4]);
    let flow_problem = |case| {
        MacroFlowProblem::new(
            case,
            ka.clone(),
            ka.clone() * 0.7,
            ks.clone(),
            Field::function(|x| 1.0 + 0.3 * (PI * x[0]).cos()),
            -0.5,
        )
        .with_solver(tight())
    };
    let oxygen = |dom: &MacroDomain, case, flow: &MacroFlowSolution| {
        let mut p = base_problem(dom, case, 0.4);
        p.fluxes = TransportFluxes::from_flow(flow);
        p.coefficients.skin.a_blood = DMatrix::from_row_slice(2, 2, &[0.2, 0.0, 0.0, 0.1]);
        p.coefficients.skin.a_tissue = DMatrix::from_row_slice(2, 2, &[0.4, 0.0, 0.0, 0.3]);
        p.dirichlet_artery = TimeField::function(|x, _| 1.0 + 0.5 * (PI * x[0]).cos());
        p.dirichlet_vein = 0.2.into();
        steady_state(&p, 0.0, tight()).unwrap()
    };
    let lim_flow = solve_case2_limit(&base, &flow_problem(FlowCase::Case2Limit)).unwrap();
    let lim = oxygen(&base, FlowCase::Case2Limit, &lim_flow);
    let surf = base.surface_grid();
    let mut errs = Vec::new();
    for delta in [0.2, 0.1, 0.05] {
        let dom = base.clone().with_slab(delta, 8).unwrap();
        let flow = solve_case2_intermediate(&dom, &flow_problem(FlowCase::Case2Intermediate)).unwrap();
        let s = oxygen(&dom, FlowCase::Case2Intermediate, &flow);
        let tr = skin_trace(&dom, FlowCase::Case2Intermediate, &s.skin_blood);
        let e: f64 = (0..surf.node_count())
            .map(|i| surf.dual_volume(i) * (tr[i] - lim.skin_blood[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        errs.push(e);
    }
    errs
}
