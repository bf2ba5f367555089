use serde::{Deserialize, Serialize};

use carfollow::simulation::{
    bistable_window, measure_flow_density, ring_density_sweep, simulate_ring, CollisionPolicy,
    FlowMeasurement, Integrator, RingConfig, RingInit, SweepPoint, DEFAULT_DT,
};
use carfollow::RandomGapPolicy;

use super::{
    event_rows, time_space_plot, time_velocity_plot, write_manifest, write_trajectory, Context,
};
use crate::config::{load, Fleet};
use crate::error::{CliError, CliResult};
use crate::output::Output;
use crate::svg::{Plot, PALETTE};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RingFile {
    circumference: f64,
    vehicles: Fleet,
    init: RingInit,
    duration: f64,
    #[serde(default)]
    vehicle_length: Option<f64>,
    #[serde(default)]
    initial_speed: Option<f64>,
    #[serde(default)]
    perturbation: f64,
    #[serde(default)]
    jam_gap: Option<f64>,
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
    /// Averaging window at the end of the run (s); half the run by default.
    #[serde(default)]
    window: Option<f64>,
    #[serde(default)]
    sweep: Option<Sweep>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sweep {
    counts: Counts,
    /// Relative flow gap that marks the two branches as distinct.
    #[serde(default = "default_margin")]
    margin: f64,
}

fn default_margin() -> f64 {
    0.05
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Counts {
    Range {
        start: usize,
        stop: usize,
        step: usize,
    },
    List(Vec<usize>),
}

impl Counts {
    fn values(&self) -> CliResult<Vec<usize>> {
        let v: Vec<usize> = match self {
            Counts::List(v) => v.clone(),
            Counts::Range { start, stop, step } if *step > 0 => {
                (*start..=*stop).step_by(*step).collect()
            }
            Counts::Range { .. } => Vec::new(),
        };
        if v.is_empty() {
            return Err(CliError::Config(
                "`sweep.counts` must name at least one vehicle count".into(),
            ));
        }
        Ok(v)
    }
}

#[derive(Serialize)]
struct FlowRow {
    n_vehicles: usize,
    init: &'static str,
    density: f64,
    flow: Option<f64>,
    mean_speed: Option<f64>,
}

impl FlowRow {
    fn new(n: usize, init: RingInit, density: f64, m: Option<FlowMeasurement>) -> Self {
        Self {
            n_vehicles: n,
            init: match init {
                RingInit::Homogeneous => "homogeneous",
                RingInit::Jam => "jam",
            },
            density,
            flow: m.map(|m| m.flow),
            mean_speed: m.map(|m| m.mean_speed),
        }
    }
}

#[derive(Serialize)]
struct Summary {
    vehicles: usize,
    density: f64,
    window: f64,
    flow: Option<f64>,
    mean_speed: Option<f64>,
    velocity_std: f64,
    halted_at_time: Option<f64>,
    collisions: usize,
    sweep_points: Option<usize>,
    bistable_window: Option<(f64, f64)>,
}

pub fn run(ctx: &Context, out: &mut Output) -> CliResult<String> {
    let file: RingFile = load(ctx.config)?;
    let drivers = file.vehicles.expand("vehicles")?;
    let seed = file.gap_policy.is_some().then(|| ctx.seed(file.seed));
    let mut cfg = RingConfig::homogeneous(file.circumference, drivers[0], 0, file.duration);
    cfg.drivers = drivers;
    cfg.init = file.init;
    if let Some(l) = file.vehicle_length {
        cfg.vehicle_length = l;
    }
    cfg.initial_speed = file.initial_speed;
    cfg.perturbation = file.perturbation;
    cfg.jam_gap = file.jam_gap;
    cfg.dt = file.dt.unwrap_or(DEFAULT_DT);
    cfg.clamp_velocity = file.clamp_velocity;
    cfg.gap_policy = file.gap_policy;
    cfg.seed = seed.map_or(0, |s| s.0);
    cfg.on_collision = file.on_collision;
    cfg.integrator = file.integrator;
    cfg.validate()?;
    let window = file.window.unwrap_or(file.duration / 2.0);
    if !(window >= 0.0 && window <= file.duration) {
        return Err(CliError::Config(format!(
            "`window` must lie in [0, {}] s",
            file.duration
        )));
    }
    let sweep = match &file.sweep {
        Some(s) => Some((s.counts.values()?, s.margin)),
        None => None,
    };

    let traj = simulate_ring(&cfg)?;
    let measured = match traj.halted_at {
        None => Some(measure_flow_density(&traj, window)?),
        Some(_) => None,
    };
    write_trajectory(out, "trajectory.csv", &traj)?;
    out.write_rows("events.csv", &event_rows(&traj))?;
    let mut rows = vec![FlowRow::new(
        cfg.n_vehicles(),
        cfg.init,
        cfg.density(),
        measured,
    )];

    let mut points: Option<Vec<SweepPoint>> = None;
    let mut window_found = None;
    if let Some((counts, margin)) = sweep {
        let pts = ring_density_sweep(&cfg, &counts, window)?;
        for p in &pts {
            rows.push(FlowRow::new(
                p.n_vehicles,
                RingInit::Homogeneous,
                p.density,
                p.homogeneous,
            ));
            rows.push(FlowRow::new(p.n_vehicles, RingInit::Jam, p.density, p.jam));
        }
        window_found = bistable_window(&pts, margin);
        points = Some(pts);
    }
    out.write_rows("flow_density.csv", &rows)?;

    out.write_svg("space_time.svg", || {
        time_space_plot(&traj, "Ring positions against time")
    })?;
    out.write_svg("time_velocity.svg", || {
        time_velocity_plot(&traj, "Ring velocities against time")
    })?;
    if let Some(pts) = &points {
        out.write_svg("flow_density.svg", || {
            let branch = |pick: fn(&SweepPoint) -> Option<FlowMeasurement>| {
                pts.iter()
                    .filter_map(|p| pick(p).map(|m| (p.density, m.flow)))
                    .collect::<Vec<_>>()
            };
            let (hom, jam) = (branch(|p| p.homogeneous), branch(|p| p.jam));
            Plot::new(
                "Ring flow against density",
                "density (veh/m)",
                "flow (veh/s)",
            )
            .line(Some("homogeneous start"), PALETTE[0], hom.clone())
            .points(None, PALETTE[0], hom)
            .line(Some("jam start"), PALETTE[1], jam.clone())
            .points(None, PALETTE[1], jam)
            .render()
        })?;
    }

    let speeds: Vec<f64> = {
        let first = traj
            .n_samples()
            .saturating_sub((window / traj.dt).round() as usize + 1);
        traj.states
            .iter()
            .flat_map(|s| s[first..].iter().map(|x| x.velocity))
            .collect()
    };
    let mean = speeds.iter().sum::<f64>() / speeds.len().max(1) as f64;
    let var = speeds.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / speeds.len().max(1) as f64;
    let summary = Summary {
        vehicles: cfg.n_vehicles(),
        density: cfg.density(),
        window,
        flow: measured.map(|m| m.flow),
        mean_speed: measured.map(|m| m.mean_speed),
        velocity_std: var.sqrt(),
        halted_at_time: traj.halted_at.map(|k| traj.time(k)),
        collisions: traj
            .events
            .iter()
            .filter(|e| matches!(e.kind, carfollow::simulation::EventKind::Collision { .. }))
            .count(),
        sweep_points: points.as_ref().map(Vec::len),
        bistable_window: window_found,
    };
    write_manifest(ctx, out, seed, &summary)?;
    let mut msg = format!(
        "ring of {} vehicles at {:.4} veh/m; velocity std {:.3} m/s",
        summary.vehicles, summary.density, summary.velocity_std
    );
    if let Some(q) = summary.flow {
        msg.push_str(&format!("; flow {q:.4} veh/s"));
    }
    if let Some((lo, hi)) = window_found {
        msg.push_str(&format!("; bistable for density in [{lo:.4}, {hi:.4}]"));
    }
    Ok(msg)
}
