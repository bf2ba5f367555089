use proptest::prelude::*;
use std::sync::Mutex;

use carfollow::equilibrium::{equilibrium, idm_equilibrium_spacing, EquilibriumBranch};
use carfollow::estimation::calibration::calibrate_ga_observed;
use carfollow::estimation::{
    fit_sigmoid, rmse, theils_u, vt_micro_fuel, CalibrationProblem, FuelCoefficients, GaSettings,
    ParamBounds, ParamId,
};
use carfollow::model::{
    acceleration, branch_acceleration, branch_jump_bound, desired_spacing, idm_acceleration,
};
use carfollow::simulation::{
    simulate_platoon, simulate_ring, Driver, LeaderProfile, PlatoonConfig, RingConfig,
};
use carfollow::stability::{
    default_frequencies, local_stability, max_transfer_magnitude, string_criterion,
};
use carfollow::{Branch, KinematicContext, Model, ModelParams};

fn params() -> impl Strategy<Value = ModelParams> {
    (
        0.3..4.0f64,
        0.5..4.0f64,
        10.0..40.0f64,
        0.3..3.0f64,
        0.5..5.0f64,
        0.05..2.0f64,
        0.0..20.0f64,
    )
        .prop_map(|(a, b, v0, t, s0, l, dc)| ModelParams::idm(a, b, v0, t, s0).with_caution(l, dc))
}

fn model() -> impl Strategy<Value = Model> {
    prop_oneof![Just(Model::Idm), Just(Model::SigmoidIdm)]
}

proptest! {
    #[test]
    fn acceleration_never_exceeds_max(
        p in params(), m in model(), gap in 0.01..200.0f64, v in 0.0..45.0f64, vl in 0.0..45.0f64
    ) {
        let a = acceleration(m, &KinematicContext::new(gap, v, vl, &p), &p).unwrap();
        prop_assert!(a <= p.max_accel);
    }

    #[test]
    fn standstill_is_never_pushed_backwards(p in params(), gap in 0.01..200.0f64, vl in 0.0..30.0f64) {
        let ctx = KinematicContext::new(gap, 0.0, vl, &p);
        prop_assert!(acceleration(Model::SigmoidIdm, &ctx, &p).unwrap() >= 0.0);
        if gap < p.jam_distance {
            prop_assert!(idm_acceleration(&ctx, &p).unwrap() < 0.0);
        }
    }

    #[test]
    fn sigmoid_branch_increases_with_gap(
        p in params(), v in 0.0..30.0f64, vl in 0.0..30.0f64, g in 0.01..100.0f64, dg in 1e-3..10.0f64
    ) {
        let s_star = desired_spacing(v, vl, &p);
        // Both gaps strictly beyond S* so the sigmoid branch is active.
        let g1 = s_star.max(0.0) + g;
        let g2 = g1 + dg;
        let a1 = acceleration(Model::SigmoidIdm, &KinematicContext::new(g1, v, vl, &p), &p).unwrap();
        let a2 = acceleration(Model::SigmoidIdm, &KinematicContext::new(g2, v, vl, &p), &p).unwrap();
        prop_assert!(a2 >= a1, "a({g1}) = {a1}, a({g2}) = {a2}");
    }

    #[test]
    fn jump_across_boundary_is_bounded(p in params(), v in 0.1..30.0f64, dv in -3.0..3.0f64) {
        let vl = (v + dv).max(0.0);
        let s_star = desired_spacing(v, vl, &p);
        prop_assume!(s_star > p.jam_distance);
        let at = |s: f64| acceleration(Model::SigmoidIdm, &KinematicContext::new(s, v, vl, &p), &p).unwrap();
        let jump = (at(s_star.next_up()) - at(s_star)).abs();
        prop_assert!(jump <= branch_jump_bound(&p) + 1e-12, "{jump} > {}", branch_jump_bound(&p));
    }

    #[test]
    fn idm_branch_matches_the_idm_bit_for_bit(p in params(), v in 0.0..30.0f64, vl in 0.0..30.0f64, f in 0.0..1.0f64) {
        let s_star = desired_spacing(v, vl, &p);
        prop_assume!(s_star > p.jam_distance);
        let gap = p.jam_distance + f * (s_star - p.jam_distance);
        prop_assume!(gap > p.jam_distance);
        let ctx = KinematicContext::new(gap, v, vl, &p);
        let sidm = acceleration(Model::SigmoidIdm, &ctx, &p).unwrap();
        prop_assert_eq!(sidm.to_bits(), idm_acceleration(&ctx, &p).unwrap().to_bits());
        prop_assert_eq!(sidm.to_bits(), branch_acceleration(Branch::Idm, &ctx, &p).unwrap().to_bits());
    }

    #[test]
    fn idm_equilibrium_lies_above_the_linear_spacing(p in params(), f in 0.0..0.99f64) {
        let v = f * p.desired_speed;
        let s = idm_equilibrium_spacing(v, &p).unwrap();
        let linear = p.jam_distance + v * p.time_headway;
        if v == 0.0 {
            prop_assert!((s - linear).abs() < 1e-12);
        } else {
            prop_assert!(s > linear);
        }
    }

    #[test]
    fn equilibrium_spacing_grows_with_speed(p in params(), m in model(), f1 in 0.0..0.98f64, df in 1e-3..0.01f64) {
        let v1 = f1 * p.desired_speed;
        let v2 = (f1 + df) * p.desired_speed;
        let e1 = equilibrium(m, v1, &p).unwrap();
        let e2 = equilibrium(m, v2, &p).unwrap();
        prop_assume!(e1.branch != EquilibriumBranch::Quasi && e2.branch != EquilibriumBranch::Quasi);
        prop_assert!(e2.spacing >= e1.spacing - 1e-8);
    }

    #[test]
    fn quasi_equilibria_respect_the_residual_bound(p in params(), f in 0.0..0.99f64) {
        let eq = equilibrium(Model::SigmoidIdm, f * p.desired_speed, &p).unwrap();
        if eq.branch == EquilibriumBranch::Quasi {
            prop_assert!(eq.residual <= branch_jump_bound(&p) + 1e-12);
        } else {
            prop_assert!(eq.spacing >= p.jam_distance);
        }
    }

    #[test]
    fn rational_derivatives_are_locally_stable(f_s in 1e-6..5.0f64, f_v in -5.0..-1e-6f64, f_dv in 0.0..5.0f64) {
        let (gp, gm, stable) = local_stability(f_s, f_v, f_dv);
        prop_assert!(stable, "{gp} {gm}");
    }

    #[test]
    fn transfer_sweep_agrees_with_the_criterion(f_s in 1e-3..2.0f64, f_v in -3.0..-1e-2f64, f_dv in 0.0..3.0f64) {
        let (value, stable) = string_criterion(f_s, f_v, f_dv).unwrap();
        prop_assume!(value.abs() > 1e-2);
        let g = max_transfer_magnitude(f_s, f_v, f_dv, &default_frequencies());
        prop_assert_eq!(g < 1.0, stable, "criterion {} max |G| {}", value, g);
    }

    #[test]
    fn rmse_is_symmetric_and_shift_exact(
        x in prop::collection::vec(-100.0..100.0f64, 1..60), y_seed in any::<u64>(), c in -50.0..50.0f64
    ) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + ((y_seed >> (i % 64)) & 7) as f64 - 3.5).collect();
        prop_assert_eq!(rmse(&x, &y).unwrap(), rmse(&y, &x).unwrap());
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        prop_assert!((rmse(&x, &shifted).unwrap() - c.abs()).abs() <= 1e-9 * (1.0 + c.abs()));
    }

    #[test]
    fn theils_u_is_a_unit_interval_score(
        x in prop::collection::vec(-100.0..100.0f64, 1..60), y in prop::collection::vec(-100.0..100.0f64, 60)
    ) {
        let y = &y[..x.len()];
        if let Ok(u) = theils_u(&x, y) {
            prop_assert!((0.0..=1.0).contains(&u), "U = {u}");
        }
        prop_assume!(x.iter().any(|v| *v != 0.0));
        prop_assert_eq!(theils_u(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn fuel_total_is_nonnegative(
        k in prop::array::uniform4(prop::array::uniform4(-1.0..1.0f64)), speed in 0.0..25.0f64, amp in 0.0..3.0f64
    ) {
        let coeffs = FuelCoefficients { k_pos: k, k_neg: None };
        let cfg = PlatoonConfig::uniform(
            LeaderProfile::Sinusoid { mean: speed + amp, amplitude: amp, period: 20.0 },
            Driver::new(Model::Idm, ModelParams::idm(1.5, 2.0, 30.0, 1.2, 2.0)),
            1, 30.0, speed, 30.0,
        );
        let traj = simulate_platoon(&cfg).unwrap();
        let report = vt_micro_fuel(&traj, 1, &coeffs).unwrap();
        prop_assert!(report.total >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ring_gaps_and_lengths_fill_the_circumference(
        n in 3usize..25, spare in 5.0..40.0f64, perturb in 0.0..5.0f64, seed in any::<u64>()
    ) {
        let p = ModelParams::idm(1.5, 2.0, 25.0, 1.2, 2.0).with_caution(1.0, 3.0);
        let length = n as f64 * (5.0 + spare);
        let mut cfg = RingConfig::homogeneous(length, Driver::new(Model::SigmoidIdm, p), n, 60.0);
        cfg.perturbation = perturb;
        cfg.seed = seed;
        let traj = simulate_ring(&cfg).unwrap();
        for k in 0..traj.n_samples() {
            let total: f64 = (0..n).map(|i| traj.gaps[i][k]).sum::<f64>() + n as f64 * traj.vehicle_length;
            prop_assert!((total - length).abs() <= 1e-6, "step {k}: {total} vs {length}");
        }
    }

    #[test]
    fn fitted_sigmoid_beats_every_start(amp in 0.2..2.0f64, k in 0.3..5.0f64, x0 in 1.0..6.0f64, seed in any::<u64>()) {
        use carfollow::estimation::sigmoid_fit::initial_guesses;
        let x: Vec<f64> = (0..60).map(|i| i as f64 * 0.12).collect();
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, &t)| amp / (1.0 + (-k * (t - x0)).exp()) + 0.02 * (((seed >> (i % 60)) & 3) as f64 - 1.5))
            .collect();
        let sse = |c: [f64; 3]| -> f64 {
            x.iter().zip(&y).map(|(&t, &v)| { let r = v - c[0] / (1.0 + (-c[1] * (t - c[2])).exp()); r * r }).sum()
        };
        let fit = fit_sigmoid(&x, &y).unwrap();
        let best = sse([fit.amplitude, fit.steepness, fit.midpoint]);
        for start in initial_guesses(&x, &y) {
            prop_assert!(best <= sse(start) + 1e-12);
        }
        prop_assert!(fit.r2 <= 1.0);
    }
}

#[test]
fn ga_evaluates_only_inside_the_box() {
    let truth = ModelParams::idm(1.5, 2.0, 20.0, 1.2, 2.0).with_caution(0.8, 5.0);
    let dt = 0.1;
    let n = 201;
    let leader_speed: Vec<f64> = (0..n)
        .map(|k| 10.0 + 2.0 * (k as f64 * dt * 0.3).sin())
        .collect();
    let mut leader_position = vec![50.0];
    for k in 1..n {
        leader_position
            .push(leader_position[k - 1] + 0.5 * (leader_speed[k - 1] + leader_speed[k]) * dt);
    }
    let mut problem = CalibrationProblem {
        model: Model::SigmoidIdm,
        dt,
        follower_position: leader_position.iter().map(|x| x - 25.0).collect(),
        follower_speed: vec![10.0; n],
        leader_position,
        leader_speed,
        vehicle_length: 5.0,
        bounds: ParamBounds::default(),
        ga: GaSettings {
            population: 16,
            generations: 6,
            ..GaSettings::default()
        },
        seed: 11,
        clamp_velocity: true,
    };
    let mut bounds = ParamBounds::default();
    bounds.set(ParamId::MaxAccel, (1.0, 2.0));
    bounds.set(ParamId::DesiredSpeed, (15.0, 25.0));
    bounds.set(ParamId::CautiousDistance, (2.0, 8.0));
    problem.bounds = bounds;
    let run = carfollow::estimation::simulate_follower(&problem, &truth).unwrap();
    problem.follower_speed = run.speeds;

    let seen = Mutex::new(Vec::new());
    let result = calibrate_ga_observed(&problem, |p, _| seen.lock().unwrap().push(*p)).unwrap();
    let seen = seen.into_inner().unwrap();
    assert_eq!(seen.len(), result.evaluations);
    assert!(bounds.contains(&result.params, ParamId::dynamic_set(Model::SigmoidIdm)));
    let ids = ParamId::dynamic_set(Model::SigmoidIdm);
    for p in &seen {
        assert!(bounds.contains(p, ids), "{p:?} left the box");
    }
}
