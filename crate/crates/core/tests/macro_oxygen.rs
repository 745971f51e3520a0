mod support;

use std::f64::consts::PI;

use support::*;
use tissue_homog::field::{Field, TimeField};
use tissue_homog::macro_flow::*;
use tissue_homog::macro_oxygen::*;

#[test]
fn time_order_is_one() {
    let errs = oxygen_time_errors();
    assert!(rates(&errs).iter().all(|&r| r >= 0.9), "{errs:?}");
}

#[test]
fn space_order_with_upwind() {
    let m = OxygenMms { p: 1.0 };
    let errs: Vec<f64> = [8, 16, 32, 64].iter().map(|&n| m.error(n)).collect();
    assert!(rates(&errs).iter().all(|&r| (0.9..=2.2).contains(&r)), "{errs:?}");
}

#[test]
fn maximum_principle_on_random_data() {
    let (lo, hi) = max_principle_extremes(10, 7);
    assert!(lo >= -1e-12, "min {lo}");
    assert!(hi <= 1.0 + 1e-10, "max / bound {hi}");
}

#[test]
fn closed_system_conserves_mass_with_flow() {
    let drift = closed_mass_drift();
    assert!(drift <= 1e-10, "{drift}");
}

#[test]
fn uniform_equilibrium_is_stationary() {
    let drift = equilibrium_drift();
    assert!(drift <= 1e-12, "{drift}");
}

#[test]
fn steady_state_matches_long_transient_and_is_linear() {
    let dom = MacroDomain::new(&[1.0], 1.0, &[8, 8]).unwrap();
    let mut prob = base_problem(&dom, FlowCase::Case1, 0.5);
    prob.dirichlet_artery = TimeField::function(|x, _| 1.0 + 0.5 * (PI * x[0]).cos());
    prob.dirichlet_vein = 0.2.into();
    prob.initial = InitialData::uniform(0.0);
    prob.initial.artery = Field::function(|x| if x[1] <= -1.0 + 1e-12 { 1.0 + 0.5 * (PI * x[0]).cos() } else { 0.0 });
    let steady = steady_state(&prob, 0.0, tight()).unwrap();
    let cfg = StepperConfig {
        solver: tight(),
        output_every: 50,
        ..StepperConfig::new(0.5, 200.0)
    };
    let traj = run_transient(&prob, &cfg).unwrap();
    let last = traj.last().unwrap();
    assert!(last.max_difference(&steady) < 1e-6);
    let n = traj.len();
    assert!(traj[n - 1].max_difference(&traj[n - 2]) <= 1e-8);

    let mut doubled = prob.clone();
    doubled.dirichlet_artery = prob.dirichlet_artery.scaled(2.0);
    doubled.dirichlet_vein = prob.dirichlet_vein.scaled(2.0);
    let s2 = steady_state(&doubled, 0.0, tight()).unwrap();
    for (a, b) in steady.fields().iter().zip(s2.fields()) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((2.0 * x - y).abs() <= 1e-10 * y.abs().max(1.0));
        }
    }
}

#[test]
fn zero_data_gives_zero_trajectory() {
    let dom = MacroDomain::new(&[1.0, 1.0], 1.0, &[3, 3, 3]).unwrap();
    let mut prob = base_problem(&dom, FlowCase::Case2Limit, 0.3);
    prob.dirichlet_artery = 0.0.into();
    prob.dirichlet_vein = 0.0.into();
    prob.initial = InitialData::uniform(0.0);
    for s in run_transient(&prob, &StepperConfig::new(0.1, 0.5)).unwrap() {
        assert_eq!(s.max(), 0.0);
        assert_eq!(s.min(), 0.0);
    }
}

#[test]
fn slab_oxygen_converges_to_the_limit_model() {
    let errs = slab_oxygen_errors();
    assert!(rates(&errs).iter().all(|&r| r >= 1.0 - 1e-3), "{errs:?}");
}
