use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tissue_homog::config::{parse_config, DataSpec, DecaySpec, RunConfig};
use tissue_homog::diffusion::{effective_diffusion, DiffusionCoefficient};
use tissue_homog::field::Field;
use tissue_homog::geometry::{build_mask, measure_cell, CellKind, GridSpec, Primitive, Shape, UnitCellSpec};
use tissue_homog::geometry::{Phase, PhaseSelector};
use tissue_homog::io::{decode_mask, encode_mask, fmt_f64, Table};
use tissue_homog::linalg::SolverOptions;
use tissue_homog::macro_flow::{solve_flow, FlowCase, MacroDomain, MacroFlowProblem};
use tissue_homog::macro_oxygen::Advection;
use tissue_homog::stokes::permeability;

fn opts() -> SolverOptions {
    SolverOptions::with_tolerance(1e-11)
}

/// Fat cell with an artery sphere in the lower half and, optionally, a vein
/// sphere in the upper half. The gap between them, across the periodic
/// seam too, stays above 0.08.
fn spheres() -> impl Strategy<Value = UnitCellSpec> {
    (0.2..0.8f64, 0.25..0.35f64, 0.08..0.15f64, prop::option::of((0.7..0.8f64, 0.08..0.12f64))).prop_map(
        |(x, y, r, vein)| {
            let mut p = vec![Primitive::artery(Shape::sphere(&[x, y], r))];
            if let Some((vy, vr)) = vein {
                p.push(Primitive::vein(Shape::sphere(&[1.0 - x, vy], vr)));
            }
            UnitCellSpec::new(CellKind::Fat, 2, p)
        },
    )
}

/// Fat cell with a horizontal artery channel of random offset and width.
fn channel() -> impl Strategy<Value = UnitCellSpec> {
    (0.2..0.8f64, 0.2..0.5f64).prop_map(|(y, w)| {
        UnitCellSpec::new(CellKind::Fat, 2, vec![Primitive::artery(Shape::cuboid(&[0.5, y], &[1.0, w]))])
    })
}

fn grid(n: usize) -> GridSpec {
    GridSpec::uniform(2, n).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fractions_sum_to_one_and_measures_are_nonnegative(spec in spheres(), n in 16usize..40) {
        let m = build_mask(&spec, &grid(n)).unwrap();
        let counts: usize = [Phase::Artery, Phase::Vein, Phase::Tissue].iter().map(|&p| m.count(p)).sum();
        prop_assert_eq!(counts, n * n);
        let c = measure_cell(&m);
        prop_assert!((c.theta.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        prop_assert!(c.theta.iter().chain(&c.surface).chain(&c.staircase).all(|&v| v >= 0.0));
    }

    #[test]
    fn commensurate_translation_keeps_measures(spec in spheres(), kx in 0usize..16, ky in 0usize..16) {
        let n = 16;
        let a = measure_cell(&build_mask(&spec, &grid(n)).unwrap());
        let shifted = spec.translated(&[kx as f64 / n as f64, ky as f64 / n as f64]);
        let b = measure_cell(&build_mask(&shifted, &grid(n)).unwrap());
        for (x, y) in a.theta.iter().zip(&b.theta).chain(a.surface.iter().zip(&b.surface)) {
            prop_assert!((x - y).abs() < 1e-12, "{:?} vs {:?}", a, b);
        }
    }

    #[test]
    fn masks_are_deterministic_and_round_trip(spec in spheres(), n in 16usize..32) {
        let a = build_mask(&spec, &grid(n)).unwrap();
        let b = build_mask(&spec, &grid(n)).unwrap();
        let bytes = encode_mask(&a);
        prop_assert_eq!(&bytes, &encode_mask(&b));
        let back = decode_mask(&bytes).unwrap();
        prop_assert_eq!(back.phases(), a.phases());
    }

    #[test]
    fn diffusion_tensor_is_symmetric_and_bounded(spec in spheres(), d in 0.2..5.0f64) {
        let m = build_mask(&spec, &grid(16)).unwrap();
        let (a, _) = effective_diffusion(&m, PhaseSelector::Tissue, &DiffusionCoefficient::Constant(d), opts()).unwrap();
        prop_assert!((&a.a - a.a.transpose()).amax() <= 1e-8 * d);
        let theta = m.count(Phase::Tissue) as f64 / (16 * 16) as f64;
        let eig = a.a.clone().symmetric_eigenvalues();
        prop_assert!(eig.min() >= -1e-10 * d);
        prop_assert!(eig.max() <= theta * d * (1.0 + 1e-10));
    }

    #[test]
    fn laminate_matches_harmonic_and_arithmetic_means(lo in 0.1..10.0f64, hi in 0.1..10.0f64) {
        let m = build_mask(&UnitCellSpec::new(CellKind::Fat, 2, vec![]), &grid(16)).unwrap();
        let d = DiffusionCoefficient::laminate(m.lattice(), 0, lo, hi);
        let (a, _) = effective_diffusion(&m, PhaseSelector::All, &d, SolverOptions::with_tolerance(1e-13)).unwrap();
        let harmonic = 2.0 / (1.0 / lo + 1.0 / hi);
        let arithmetic = 0.5 * (lo + hi);
        prop_assert!((a.a[(0, 0)] / harmonic - 1.0).abs() < 1e-8);
        prop_assert!((a.a[(1, 1)] / arithmetic - 1.0).abs() < 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn permeability_is_symmetric_psd_and_scales_with_viscosity(spec in channel(), mu in 0.2..5.0f64) {
        let m = build_mask(&spec, &grid(16)).unwrap();
        let (k1, _) = permeability(&m, PhaseSelector::Artery, 1.0, opts()).unwrap();
        let (k, _) = permeability(&m, PhaseSelector::Artery, mu, opts()).unwrap();
        let scale = k1.k.amax();
        prop_assert!((&k1.k - k1.k.transpose()).amax() <= 1e-8 * scale);
        prop_assert!(k1.k[(0, 0)] > 0.0);
        for t in 0..20 {
            let a = t as f64 * 0.3;
            let x = DVector::from_row_slice(&[a.cos(), a.sin()]);
            prop_assert!(x.dot(&(&k1.k * &x)) >= -1e-10 * scale);
        }
        let diff: DMatrix<f64> = &k.k * mu - &k1.k;
        prop_assert!(diff.amax() <= 1e-8 * scale, "{} vs {}", k.k, k1.k);
    }

    #[test]
    fn flow_is_linear_in_the_dirichlet_data(
        pa in -2.0..2.0f64, pv in -2.0..2.0f64, alpha in 0.1..10.0f64, case in 0usize..3,
    ) {
        let case = [FlowCase::Case1, FlowCase::Case2Intermediate, FlowCase::Case2Limit][case];
        let dom = MacroDomain::new(&[1.0], 1.0, &[6, 5]).unwrap().with_slab(0.1, 8).unwrap();
        let eye = DMatrix::<f64>::identity(2, 2);
        let solver = SolverOptions { tolerance: 1e-13, max_iterations: 100_000 };
        let prob = |s: f64| {
            MacroFlowProblem::new(
                case, eye.clone(), eye.clone() * 0.5, eye.clone(),
                Field::function(move |x| s * (pa + 0.3 * x[0])),
                Field::Constant(s * pv),
            )
            .with_solver(solver)
        };
        let a = solve_flow(&dom, &prob(1.0)).unwrap();
        let b = solve_flow(&dom, &prob(alpha)).unwrap();
        let scale = pa.abs().max(pv.abs()).max(0.3) * alpha;
        for (x, y) in a.p_artery.iter().chain(&a.p_vein).zip(b.p_artery.iter().chain(&b.p_vein)) {
            prop_assert!((alpha * x - y).abs() <= 1e-9 * scale);
        }
        prop_assert!(a.diagnostics.compatible(1e-8));
    }
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1e-6..1e-6f64, any::<f64>().prop_filter("finite", |x| x.is_finite())]
}

fn data_spec() -> impl Strategy<Value = DataSpec> {
    prop_oneof![
        (0.0..2.0f64).prop_map(DataSpec::Constant),
        (0.5..2.0f64, 0.0..0.5f64, 0.0..4.0f64).prop_map(|(mean, amplitude, k)| DataSpec::Cosine {
            mean,
            amplitude,
            wavenumber: vec![k],
        }),
    ]
}

fn run_config() -> impl Strategy<Value = RunConfig> {
    (
        0usize..3,
        (4usize..64, 2usize..40, 2usize..40, 8usize..16),
        (1e-12..1e-4f64, 10usize..100_000),
        (0.1..10.0f64, prop::array::uniform3(0.1..5.0f64), prop::array::uniform2(0.0..3.0f64)),
        (data_spec(), data_spec(), data_spec(), data_spec(), 0.0..1.0f64),
        (prop::option::of(1e-4..1e-1f64), 1e-3..10.0f64, 1usize..50, any::<bool>()),
        prop_oneof![
            (0.0..1.0f64).prop_map(DecaySpec::Constant),
            prop::collection::vec(0.0..1.0f64, 2..5).prop_map(|values| DecaySpec::Samples {
                times: (0..values.len()).map(|i| i as f64).collect(),
                values,
            }),
        ],
    )
        .prop_map(|(case, g, s, p, data, t, decay)| {
            let case = [FlowCase::Case1, FlowCase::Case2Intermediate, FlowCase::Case2Limit][case];
            let mut c = RunConfig::new(case);
            c.grid.cell = g.0;
            c.grid.macro_cells = vec![g.1, g.2];
            c.grid.slab_layers = g.3;
            c.solver.tolerance = s.0;
            c.solver.max_iterations = s.1;
            c.physics.viscosity = p.0;
            c.physics.diffusion = p.1;
            c.physics.lambda = p.2;
            c.physics.p_artery = data.0;
            c.physics.p_vein = data.1;
            c.physics.c_artery = data.2;
            c.physics.c_vein = data.3;
            c.physics.c_initial = data.4;
            c.physics.decay = decay;
            c.time.dt = t.0;
            c.time.final_time = t.1;
            c.time.output_every = t.2;
            c.time.advection = if t.3 { Advection::Upwind } else { Advection::Limited };
            c
        })
}

proptest! {
    #[test]
    fn config_round_trips_through_toml(cfg in run_config()) {
        let text = cfg.to_toml();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn floats_round_trip_through_csv(values in prop::collection::vec(finite(), 1..20)) {
        for &x in &values {
            prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        let mut t = Table::new(["v"]);
        for &x in &values {
            t.push(vec![x]);
        }
        let back = Table::parse(&t.to_csv()).unwrap();
        prop_assert_eq!(back.column("v").unwrap(), values);
    }
}
