use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use carfollow::equilibrium::{equilibrium, EquilibriumBranch};
use carfollow::simulation::{
    simulate_platoon, simulate_ring, CollisionPolicy, Driver, EventKind, LeaderProfile,
    PlatoonConfig, RingConfig, Trajectory,
};
use carfollow::stability::classify_cell;
use carfollow::{Model, ModelParams, RandomGapPolicy, RandomMode};

fn standstill_params() -> ModelParams {
    ModelParams::idm(3.0, 2.0, 10.0, 1.6, 5.0)
}

fn standstill(model: Model, p: ModelParams, gap: f64, duration: f64) -> PlatoonConfig {
    let mut cfg = PlatoonConfig::uniform(
        LeaderProfile::Stationary,
        Driver::new(model, p),
        1,
        gap,
        0.0,
        duration,
    );
    cfg.clamp_velocity = false;
    cfg
}

#[test]
fn idm_reverses_behind_a_close_stopped_leader() {
    let traj = simulate_platoon(&standstill(Model::Idm, standstill_params(), 4.0, 10.0)).unwrap();
    assert!(traj.velocities(1).iter().any(|&v| v < 0.0));
    assert!(traj.has_event(|e| matches!(e, EventKind::NegativeVelocity { .. })));
}

#[test]
fn idm_over_accelerates_then_brakes() {
    let traj = simulate_platoon(&standstill(Model::Idm, standstill_params(), 10.0, 20.0)).unwrap();
    let acc = traj.accelerations(1);
    assert!(acc[0] > 2.0, "initial acceleration {}", acc[0]);
    let peak = acc.iter().position(|&a| a < 0.0).expect("a braking phase");
    assert!(acc[..peak].iter().all(|&a| a > 0.0));
}

#[test]
fn sigmoid_idm_never_needs_the_clamp_from_standstill() {
    let p = standstill_params().with_caution(1.0, 10.0);
    let mut cfg = standstill(Model::SigmoidIdm, p, 4.0, 60.0);
    cfg.clamp_velocity = true;
    let traj = simulate_platoon(&cfg).unwrap();
    assert!(traj.min_velocity() >= 0.0);
    assert!(!traj.has_event(|e| matches!(e, EventKind::VelocityClamped)));
}

#[test]
fn follower_at_equilibrium_stays_there() {
    let p = ModelParams::idm(1.73, 2.0, 33.33, 1.0, 2.0).with_caution(1.0, 10.0);
    let v = 12.0;
    let eq = equilibrium(Model::SigmoidIdm, v, &p).unwrap();
    assert_eq!(eq.branch, EquilibriumBranch::SigmoidBranch);
    let cfg = PlatoonConfig::uniform(
        LeaderProfile::Constant { speed: v },
        Driver::new(Model::SigmoidIdm, p),
        1,
        eq.spacing,
        v,
        300.0,
    );
    let traj = simulate_platoon(&cfg).unwrap();
    let target = vec![eq.spacing; traj.n_samples()];
    let err = carfollow::estimation::rmse(&target, &traj.gaps[1]).unwrap();
    assert!(err <= 1e-3, "gap RMSE {err}");
}

#[test]
fn homogeneous_ring_at_equilibrium_is_a_fixed_point() {
    let p = ModelParams::idm(1.5, 2.0, 25.0, 1.2, 2.0).with_caution(1.0, 3.0);
    let cfg = RingConfig::homogeneous(800.0, Driver::new(Model::SigmoidIdm, p), 32, 600.0);
    let traj = simulate_ring(&cfg).unwrap();
    let last = traj.n_samples() - 1;
    let speeds: Vec<f64> = traj.states.iter().map(|s| s[last].velocity).collect();
    let spread = speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - speeds.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(spread <= 1e-6, "velocity spread {spread}");
}

fn ring_velocity_variance(traj: &Trajectory, window: f64) -> f64 {
    let first = traj.n_samples() - (window / traj.dt).round() as usize;
    let v: Vec<f64> = traj
        .states
        .iter()
        .flat_map(|s| s[first..].iter().map(|x| x.velocity))
        .collect();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64
}

#[test]
fn negative_cautious_walk_damps_ring_oscillation() {
    let p = ModelParams::idm(1.0, 1.5, 20.0, 1.5, 2.0).with_caution(0.5, 10.0);
    let run = |mode: RandomMode, seed: u64| {
        let mut cfg = RingConfig::homogeneous(600.0, Driver::new(Model::SigmoidIdm, p), 40, 900.0);
        cfg.initial_speed = Some(5.0);
        cfg.perturbation = 1.0;
        cfg.seed = seed;
        cfg.gap_policy = Some(RandomGapPolicy {
            probability: 0.25,
            range: 5.0,
            mode,
            floor: 0.0,
        });
        let traj = simulate_ring(&cfg).unwrap();
        assert!(traj.halted_at.is_none());
        ring_velocity_variance(&traj, 300.0)
    };
    for seed in 0..2 {
        let fixed = run(RandomMode::Zero, seed);
        let walked = run(RandomMode::Negative, seed);
        assert!(walked < fixed, "seed {seed}: {walked} vs {fixed}");
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let p = ModelParams::idm(1.0, 1.5, 20.0, 1.5, 2.0).with_caution(0.5, 10.0);
    let mut cfg = RingConfig::homogeneous(600.0, Driver::new(Model::SigmoidIdm, p), 40, 120.0);
    cfg.perturbation = 1.0;
    cfg.seed = 99;
    cfg.gap_policy = Some(RandomGapPolicy {
        probability: 0.25,
        range: 5.0,
        mode: RandomMode::Symmetric,
        floor: 0.0,
    });
    let a = simulate_ring(&cfg).unwrap();
    let b = simulate_ring(&cfg).unwrap();
    assert_eq!(a, b);
    cfg.seed = 100;
    assert_ne!(a, simulate_ring(&cfg).unwrap());
}

#[test]
fn logged_accelerations_reproduce_the_motion() {
    let p = ModelParams::idm(1.5, 2.0, 20.0, 1.2, 2.0).with_caution(0.8, 5.0);
    let mut cfg = PlatoonConfig::uniform(
        LeaderProfile::Sinusoid {
            mean: 10.0,
            amplitude: 3.0,
            period: 30.0,
        },
        Driver::new(Model::SigmoidIdm, p),
        4,
        20.0,
        10.0,
        120.0,
    );
    cfg.clamp_velocity = false;
    let traj = simulate_platoon(&cfg).unwrap();
    let dt = traj.dt;
    for i in 1..traj.n_vehicles() {
        let s = &traj.states[i];
        for k in 0..s.len() - 1 {
            let v = s[k].velocity + s[k].acceleration * dt;
            let x = s[k].position + s[k].velocity * dt + 0.5 * s[k].acceleration * dt * dt;
            assert!(
                (v - s[k + 1].velocity).abs() <= 1e-9,
                "vehicle {i} step {k}"
            );
            assert!(
                (x - s[k + 1].position).abs() <= 1e-9,
                "vehicle {i} step {k}"
            );
        }
    }
}

#[test]
fn clamped_platoon_keeps_order_and_nonnegative_speed() {
    let p = ModelParams::idm(2.0, 2.0, 25.0, 1.2, 2.0).with_caution(1.0, 4.0);
    let cfg = PlatoonConfig::uniform(
        LeaderProfile::Piecewise {
            schedule: vec![(0.0, 15.0), (20.0, 0.0), (40.0, 12.0)],
        },
        Driver::new(Model::SigmoidIdm, p),
        8,
        25.0,
        15.0,
        120.0,
    );
    let traj = simulate_platoon(&cfg).unwrap();
    assert!(traj.min_velocity() >= 0.0);
    for k in 0..traj.n_samples() {
        for i in 1..traj.n_vehicles() {
            assert!(traj.states[i][k].position < traj.states[i - 1][k].position);
        }
    }
}

#[test]
fn continue_mode_logs_collisions_and_runs_on() {
    // Below s0 the sigmoid branch barely brakes, so the follower rolls into
    // the stopped leader.
    let p = ModelParams::idm(3.0, 2.0, 10.0, 1.6, 2.0).with_caution(1.0, 10.0);
    let mut cfg = PlatoonConfig {
        on_collision: CollisionPolicy::Continue,
        ..standstill(Model::SigmoidIdm, p, 1.0, 5.0)
    };
    cfg.clamp_velocity = true;
    cfg.initial_speeds = vec![5.0];
    let traj = simulate_platoon(&cfg).unwrap();
    assert!(traj.has_event(|e| matches!(e, EventKind::Collision { .. })));
    assert!(traj.halted_at.is_none());
    assert_eq!(traj.n_samples(), 51);
}

/// Largest deviation from `v_e` of one vehicle's speed.
fn deviation(traj: &Trajectory, vehicle: usize, v_e: f64) -> f64 {
    traj.velocities(vehicle)
        .iter()
        .map(|v| (v - v_e).abs())
        .fold(0.0, f64::max)
}

#[test]
fn map_classification_matches_simulated_growth() {
    let context = ModelParams::idm(1.73, 2.0, 21.667, 1.0, 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lambda = Uniform::new(0.05, 2.0).unwrap();
    let dc = Uniform::new(0.0, 20.0).unwrap();
    let (mut sampled, mut agree, mut draws) = (0, 0, 0);
    while sampled < 40 && draws < 10_000 {
        draws += 1;
        let v_e = if draws % 2 == 0 { 6.944 } else { 15.0 };
        let (l, d) = (lambda.sample(&mut rng), dc.sample(&mut rng));
        let cell = classify_cell(&context, v_e, l, d).unwrap();
        // Away from the boundary and with a genuine equilibrium only.
        if cell.equilibrium == EquilibriumBranch::Quasi || cell.criterion.abs() < 0.1 {
            continue;
        }
        let p = context.with_caution(l, d);
        let cfg = PlatoonConfig::uniform(
            LeaderProfile::Piecewise {
                schedule: vec![(0.0, v_e), (2.0, v_e - 0.01), (7.0, v_e)],
            },
            Driver::new(Model::SigmoidIdm, p),
            10,
            cell.spacing,
            v_e,
            900.0,
        );
        let traj = simulate_platoon(&cfg).unwrap();
        let grows = deviation(&traj, 10, v_e) > deviation(&traj, 1, v_e);
        if grows != (cell.criterion > 0.0) {
            agree += 1;
        }
        sampled += 1;
    }
    assert_eq!(sampled, 40);
    assert!(agree * 10 >= sampled * 9, "{agree} of {sampled} agree");
}
