use serde::{Deserialize, Serialize};

use carfollow::equilibrium::equilibrium;
use carfollow::simulation::{
    simulate_platoon, spacing_velocity_loop, CollisionPolicy, EventKind, Integrator, LeaderProfile,
    PlatoonConfig, DEFAULT_DT,
};
use carfollow::{simulation::LoopPhase, RandomGapPolicy};

use super::{time_space_plot, time_velocity_plot, write_manifest, write_trajectory, Context};
use crate::config::{load, Fleet, GapKeyword, GapSpec, PerVehicle};
use crate::error::CliResult;
use crate::output::Output;
use crate::svg::{Plot, PALETTE};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    leader: LeaderProfile,
    followers: Fleet,
    initial_gap: GapSpec,
    initial_speed: PerVehicle,
    duration: f64,
    #[serde(default)]
    vehicle_length: Option<f64>,
    #[serde(default)]
    dt: Option<f64>,
    #[serde(default = "yes")]
    clamp_velocity: bool,
    #[serde(default)]
    gap_policy: Option<RandomGapPolicy>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    on_collision: CollisionPolicy,
    #[serde(default)]
    integrator: Integrator,
    /// Vehicle drawn in the spacing-velocity plot; the last one by default.
    #[serde(default)]
    loop_vehicle: Option<usize>,
}

fn yes() -> bool {
    true
}

#[derive(Serialize)]
struct Summary {
    vehicles: usize,
    samples: usize,
    min_velocity: f64,
    collisions: usize,
    negative_velocity_events: usize,
    clamp_events: usize,
    halted_at_time: Option<f64>,
    loop_vehicle: usize,
    coasting_fraction: f64,
}

pub fn run(ctx: &Context, out: &mut Output) -> CliResult<String> {
    let cfg: SimulateConfig = load(ctx.config)?;
    let followers = cfg.followers.expand("followers")?;
    let n = followers.len();
    let seed = cfg.gap_policy.is_some().then(|| ctx.seed(cfg.seed));
    let mut platoon = PlatoonConfig::uniform(cfg.leader, followers[0], n, 1.0, 0.0, cfg.duration);
    platoon.followers = followers;
    platoon.initial_speeds = cfg.initial_speed.expand(n, "initial_speed")?;
    platoon.initial_gaps = match &cfg.initial_gap {
        GapSpec::Values(g) => g.expand(n, "initial_gap")?,
        GapSpec::Keyword(GapKeyword::Equilibrium) => platoon
            .followers
            .iter()
            .zip(&platoon.initial_speeds)
            .map(|(d, &v)| equilibrium(d.model, v, &d.params).map(|e| e.spacing))
            .collect::<Result<_, _>>()?,
    };
    if let Some(l) = cfg.vehicle_length {
        platoon.vehicle_length = l;
    }
    platoon.dt = cfg.dt.unwrap_or(DEFAULT_DT);
    platoon.clamp_velocity = cfg.clamp_velocity;
    platoon.gap_policy = cfg.gap_policy;
    platoon.seed = seed.map_or(0, |s| s.0);
    platoon.on_collision = cfg.on_collision;
    platoon.integrator = cfg.integrator;
    platoon.validate()?;
    let loop_vehicle = cfg.loop_vehicle.unwrap_or(n);
    if loop_vehicle == 0 || loop_vehicle > n {
        return Err(crate::error::CliError::Config(format!(
            "`loop_vehicle` must be a follower index in 1..={n}"
        )));
    }

    let traj = simulate_platoon(&platoon)?;
    let lp = spacing_velocity_loop(&traj, loop_vehicle)?;

    write_trajectory(out, "trajectory.csv", &traj)?;
    out.write_rows("events.csv", &super::event_rows(&traj))?;
    out.write_svg("time_velocity.svg", || {
        time_velocity_plot(&traj, "Velocity against time")
    })?;
    out.write_svg("time_space.svg", || {
        time_space_plot(&traj, "Position against time")
    })?;
    out.write_svg("spacing_velocity.svg", || {
        let phase = |want: LoopPhase| -> Vec<(f64, f64)> {
            lp.samples
                .iter()
                .filter(|s| s.phase == want && s.gap.is_finite())
                .map(|s| (s.gap, s.speed))
                .collect()
        };
        let path = lp.samples.iter().map(|s| (s.gap, s.speed)).collect();
        Plot::new(
            &format!("Spacing against velocity, vehicle {loop_vehicle}"),
            "spacing (m)",
            "velocity (m/s)",
        )
        .line(None, "#bbbbbb", path)
        .points(
            Some("accelerating"),
            PALETTE[2],
            phase(LoopPhase::Accelerating),
        )
        .points(
            Some("decelerating"),
            PALETTE[1],
            phase(LoopPhase::Decelerating),
        )
        .points(Some("coasting"), PALETTE[0], phase(LoopPhase::Coasting))
        .render()
    })?;

    let count = |f: fn(&EventKind) -> bool| traj.events.iter().filter(|e| f(&e.kind)).count();
    let summary = Summary {
        vehicles: traj.n_vehicles(),
        samples: traj.n_samples(),
        min_velocity: traj.min_velocity(),
        collisions: count(|k| matches!(k, EventKind::Collision { .. })),
        negative_velocity_events: count(|k| matches!(k, EventKind::NegativeVelocity { .. })),
        clamp_events: count(|k| matches!(k, EventKind::VelocityClamped)),
        halted_at_time: traj.halted_at.map(|k| traj.time(k)),
        loop_vehicle,
        coasting_fraction: lp.coasting_fraction,
    };
    write_manifest(ctx, out, seed, &summary)?;
    Ok(format!(
        "simulated {} vehicles for {} s; min velocity {:.4} m/s; {} collisions",
        summary.vehicles,
        traj.duration(),
        summary.min_velocity,
        summary.collisions
    ))
}
