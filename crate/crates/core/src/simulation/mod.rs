//! Time-stepped simulation of vehicles on an open road or a ring.
//!
//! Vehicle `i` follows vehicle `i - 1`; on a ring vehicle 0 follows the last
//! one. Positions are the front bumper and are kept unwrapped, so gaps are
//! plain differences (plus one circumference for the wrap-around pair).

mod analysis;
mod leader;
mod ring;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    acceleration, active_branch, update_cautious_distance, Branch, KinematicContext, Model,
    ModelParams, RandomGapPolicy,
};

pub use analysis::{
    measure_flow_density, spacing_velocity_loop, wave_speed, FlowMeasurement, LoopPhase,
    LoopSample, SpacingVelocityLoop, WaveDirection, COASTING_ACCEL, COASTING_MIN_DURATION,
};
pub use leader::{LeaderProfile, LeaderSample};
pub use ring::{
    bistable_window, ring_density_sweep, simulate_ring, RingConfig, RingInit, SweepPoint,
};

/// Default integration step (s).
pub const DEFAULT_DT: f64 = 0.1;

/// Gap used for evaluating the law after a collision in continue mode (m).
const COLLISION_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: f64,
    pub velocity: f64,
    pub acceleration: f64,
}

/// A law together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Driver {
    pub model: Model,
    pub params: ModelParams,
}

impl Driver {
    pub fn new(model: Model, params: ModelParams) -> Self {
        Self { model, params }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Exact for constant acceleration over a step.
    #[default]
    Ballistic,
    /// Explicit Euler, kept for cross-checks.
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionPolicy {
    /// Stop the run at the first non-positive gap.
    #[default]
    Halt,
    /// Log and keep going with a tiny positive gap fed to the law.
    Continue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Collision {
        gap: f64,
    },
    /// Velocity went below zero (unclamped runs).
    NegativeVelocity {
        velocity: f64,
    },
    /// The clamp stopped a vehicle that would have reversed.
    VelocityClamped,
    BranchSwitch {
        to: Branch,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub step: usize,
    pub vehicle: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Uniformly sampled states of every vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub vehicle_length: f64,
    /// Circumference when the run was on a ring.
    pub ring_length: Option<f64>,
    /// `states[vehicle][step]`
    pub states: Vec<Vec<VehicleState>>,
    /// Net gap to the vehicle ahead; NaN for an open-road leader.
    pub gaps: Vec<Vec<f64>>,
    /// Present when a cautious-distance policy was active.
    pub cautious_distances: Option<Vec<Vec<f64>>>,
    pub events: Vec<Event>,
    /// Step at which a collision stopped the run.
    pub halted_at: Option<usize>,
}

impl Trajectory {
    pub fn n_vehicles(&self) -> usize {
        self.states.len()
    }

    pub fn n_samples(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.time(self.n_samples().saturating_sub(1))
    }

    pub fn velocities(&self, vehicle: usize) -> Vec<f64> {
        self.states[vehicle].iter().map(|s| s.velocity).collect()
    }

    pub fn accelerations(&self, vehicle: usize) -> Vec<f64> {
        self.states[vehicle]
            .iter()
            .map(|s| s.acceleration)
            .collect()
    }

    pub fn positions(&self, vehicle: usize) -> Vec<f64> {
        self.states[vehicle].iter().map(|s| s.position).collect()
    }

    pub fn min_velocity(&self) -> f64 {
        self.states
            .iter()
            .flatten()
            .map(|s| s.velocity)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn has_event(&self, pred: impl Fn(&EventKind) -> bool) -> bool {
        self.events.iter().any(|e| pred(&e.kind))
    }
}

/// Geometry shared by one step of every vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Road {
    pub vehicle_length: f64,
    pub ring_length: Option<f64>,
}

impl Road {
    /// Net gap of vehicle `i` and the speed of the vehicle ahead.
    pub fn gap_ahead(&self, states: &[VehicleState], i: usize) -> Option<(f64, f64)> {
        let n = states.len();
        match self.ring_length {
            None if i == 0 => None,
            None => Some((
                states[i - 1].position - states[i].position - self.vehicle_length,
                states[i - 1].velocity,
            )),
            Some(l) => {
                let (j, wrap) = if i == 0 { (n - 1, l) } else { (i - 1, 0.0) };
                Some((
                    states[j].position + wrap - states[i].position - self.vehicle_length,
                    states[j].velocity,
                ))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub dt: f64,
    pub clamp_velocity: bool,
    pub integrator: Integrator,
    pub on_collision: CollisionPolicy,
}

/// What one [`step`] observed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    /// `(vehicle, gap)` for every driven vehicle with a non-positive gap.
    pub collisions: Vec<(usize, f64)>,
    /// Vehicles whose update was truncated by the velocity clamp.
    pub clamped: Vec<usize>,
    /// Active branch per vehicle (None for IDM drivers and undriven vehicles).
    pub branches: Vec<Option<Branch>>,
}

/// Advances every driven vehicle by one step.
///
/// `drivers[i] == None` marks a vehicle moved externally (the open-road
/// leader); its state is left untouched. Accelerations are evaluated at the
/// current states, written into `acceleration`, then applied. With the clamp
/// enabled a vehicle that would reverse stops where its velocity reaches
/// zero and its recorded acceleration is the one actually applied.
///
/// Returns early, without moving anything, on a collision when the policy
/// is [`CollisionPolicy::Halt`].
pub fn step(
    states: &mut [VehicleState],
    drivers: &[Option<Driver>],
    cautious: Option<&[f64]>,
    road: &Road,
    opts: &StepOptions,
) -> Result<StepReport> {
    let n = states.len();
    let mut report = StepReport {
        branches: vec![None; n],
        ..Default::default()
    };
    let mut accel = vec![0.0; n];
    for i in 0..n {
        let Some(driver) = drivers[i] else { continue };
        let mut params = driver.params;
        if let Some(dc) = cautious {
            params.cautious_distance = dc[i];
        }
        let (gap, v_lead) = match road.gap_ahead(states, i) {
            Some(g) => g,
            None => (f64::INFINITY, states[i].velocity),
        };
        let mut law_gap = gap;
        if gap <= 0.0 {
            report.collisions.push((i, gap));
            law_gap = COLLISION_GAP;
        }
        let ctx = KinematicContext::new(law_gap, states[i].velocity, v_lead, &params);
        if driver.model == Model::SigmoidIdm {
            report.branches[i] = Some(active_branch(ctx.gap, ctx.s_star, &params));
        }
        accel[i] = acceleration(driver.model, &ctx, &params)?;
    }
    for i in 0..n {
        if drivers[i].is_some() {
            states[i].acceleration = accel[i];
        }
    }
    if !report.collisions.is_empty() && opts.on_collision == CollisionPolicy::Halt {
        return Ok(report);
    }

    let dt = opts.dt;
    for i in 0..n {
        if drivers[i].is_none() {
            continue;
        }
        let s = &mut states[i];
        let a = accel[i];
        let v_next = s.velocity + a * dt;
        if opts.clamp_velocity && v_next < 0.0 {
            // Stop at the instant the velocity reaches zero.
            let travel = if a < 0.0 && s.velocity > 0.0 {
                -s.velocity * s.velocity / (2.0 * a)
            } else {
                0.0
            };
            s.position += travel;
            s.acceleration = -s.velocity / dt;
            s.velocity = 0.0;
            report.clamped.push(i);
            continue;
        }
        match opts.integrator {
            Integrator::Ballistic => s.position += s.velocity * dt + 0.5 * a * dt * dt,
            Integrator::Euler => s.position += s.velocity * dt,
        }
        s.velocity = v_next;
    }
    Ok(report)
}

/// Settings for an open-road platoon run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatoonConfig {
    pub leader: LeaderProfile,
    /// One per following vehicle, front to back.
    pub followers: Vec<Driver>,
    #[serde(default = "default_length")]
    pub vehicle_length: f64,
    /// Initial net gap of each follower to the vehicle ahead.
    pub initial_gaps: Vec<f64>,
    /// Initial speed of each follower.
    pub initial_speeds: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    #[serde(default = "default_true")]
    pub clamp_velocity: bool,
    #[serde(default)]
    pub gap_policy: Option<RandomGapPolicy>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub on_collision: CollisionPolicy,
    #[serde(default)]
    pub integrator: Integrator,
}

fn default_length() -> f64 {
    crate::equilibrium::DEFAULT_VEHICLE_LENGTH
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_true() -> bool {
    true
}

impl PlatoonConfig {
    /// A platoon of identical followers, all starting with the same gap and speed.
    pub fn uniform(
        leader: LeaderProfile,
        driver: Driver,
        n_followers: usize,
        gap: f64,
        speed: f64,
        duration: f64,
    ) -> Self {
        Self {
            leader,
            followers: vec![driver; n_followers],
            vehicle_length: default_length(),
            initial_gaps: vec![gap; n_followers],
            initial_speeds: vec![speed; n_followers],
            dt: DEFAULT_DT,
            duration,
            clamp_velocity: true,
            gap_policy: None,
            seed: 0,
            on_collision: CollisionPolicy::Halt,
            integrator: Integrator::Ballistic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        self.leader.validate()?;
        let n = self.followers.len();
        if self.initial_gaps.len() != n || self.initial_speeds.len() != n {
            return bad(format!(
                "{n} followers but {} gaps and {} speeds",
                self.initial_gaps.len(),
                self.initial_speeds.len()
            ));
        }
        if self.initial_gaps.iter().any(|g| !(*g > 0.0)) {
            return bad("initial gaps must be positive".into());
        }
        if self
            .initial_speeds
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return bad("initial speeds must be finite and >= 0".into());
        }
        check_run_settings(self.dt, self.duration, self.vehicle_length)?;
        for d in &self.followers {
            d.params.validate(d.model)?;
        }
        if let Some(p) = &self.gap_policy {
            p.validate()?;
        }
        Ok(())
    }
}

pub(crate) fn check_run_settings(dt: f64, duration: f64, vehicle_length: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidParams(format!(
            "duration must be >= 0, got {duration}"
        )));
    }
    if !(vehicle_length >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "vehicle length must be >= 0, got {vehicle_length}"
        )));
    }
    Ok(())
}

/// Sets the externally driven leader for the sample at time `t`.
type LeaderHook<'a> = dyn FnMut(&mut [VehicleState], f64) + 'a;

/// Shared loop for platoon and ring runs.
pub(crate) struct RunSpec<'a> {
    pub initial: Vec<VehicleState>,
    pub drivers: Vec<Option<Driver>>,
    pub road: Road,
    pub opts: StepOptions,
    pub n_steps: usize,
    pub gap_policy: Option<RandomGapPolicy>,
    pub seed: u64,
    pub leader: Option<Box<LeaderHook<'a>>>,
}

pub(crate) fn run(mut spec: RunSpec<'_>) -> Result<Trajectory> {
    let n = spec.initial.len();
    let mut states = spec.initial.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cautious: Option<Vec<f64>> = spec.gap_policy.map(|_| {
        spec.drivers
            .iter()
            .map(|d| d.map_or(0.0, |d| d.params.cautious_distance))
            .collect()
    });

    let cap = spec.n_steps + 1;
    let mut traj = Trajectory {
        dt: spec.opts.dt,
        vehicle_length: spec.road.vehicle_length,
        ring_length: spec.road.ring_length,
        states: vec![Vec::with_capacity(cap); n],
        gaps: vec![Vec::with_capacity(cap); n],
        cautious_distances: cautious.as_ref().map(|_| vec![Vec::with_capacity(cap); n]),
        events: Vec::new(),
        halted_at: None,
    };
    let mut last_branch: Vec<Option<Branch>> = vec![None; n];
    let mut was_clamped = vec![false; n];
    let mut was_negative = vec![false; n];

    for k in 0..=spec.n_steps {
        let mut next = states.clone();
        let report = step(
            &mut next,
            &spec.drivers,
            cautious.as_deref(),
            &spec.road,
            &spec.opts,
        )?;

        // Sample k holds the state before the update together with the
        // acceleration applied over [k, k+1].
        for i in 0..n {
            let mut s = states[i];
            if spec.drivers[i].is_some() {
                s.acceleration = next[i].acceleration;
            }
            if !(s.position.is_finite() && s.velocity.is_finite() && s.acceleration.is_finite()) {
                return Err(Error::NonFinite {
                    step: k,
                    vehicle: i,
                });
            }
            traj.states[i].push(s);
            traj.gaps[i].push(spec.road.gap_ahead(&states, i).map_or(f64::NAN, |g| g.0));
            if let (Some(store), Some(dc)) = (traj.cautious_distances.as_mut(), cautious.as_ref()) {
                store[i].push(dc[i]);
            }
            if let Some(b) = report.branches[i] {
                if last_branch[i].is_some_and(|prev| prev != b) {
                    traj.events.push(Event {
                        step: k,
                        vehicle: i,
                        kind: EventKind::BranchSwitch { to: b },
                    });
                }
                last_branch[i] = Some(b);
            }
        }
        for &(i, gap) in &report.collisions {
            traj.events.push(Event {
                step: k,
                vehicle: i,
                kind: EventKind::Collision { gap },
            });
        }
        if !report.collisions.is_empty() && spec.opts.on_collision == CollisionPolicy::Halt {
            traj.halted_at = Some(k);
            break;
        }
        if k == spec.n_steps {
            break;
        }

        states = next;
        for i in 0..n {
            let clamped = report.clamped.contains(&i);
            if clamped && !was_clamped[i] {
                traj.events.push(Event {
                    step: k + 1,
                    vehicle: i,
                    kind: EventKind::VelocityClamped,
                });
            }
            was_clamped[i] = clamped;
            let negative = states[i].velocity < 0.0;
            if negative && !was_negative[i] {
                traj.events.push(Event {
                    step: k + 1,
                    vehicle: i,
                    kind: EventKind::NegativeVelocity {
                        velocity: states[i].velocity,
                    },
                });
            }
            was_negative[i] = negative;
        }
        if let Some(hook) = spec.leader.as_mut() {
            hook(&mut states, (k + 1) as f64 * spec.opts.dt);
        }
        if let (Some(policy), Some(dc)) = (spec.gap_policy.as_ref(), cautious.as_mut()) {
            for (d, driver) in dc.iter_mut().zip(&spec.drivers) {
                if driver.is_some_and(|d| d.model == Model::SigmoidIdm) {
                    *d = update_cautious_distance(*d, policy, &mut rng);
                }
            }
        }
    }
    Ok(traj)
}

pub(crate) fn n_steps(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize
}

/// Runs an open-road platoon behind a scripted leader.
pub fn simulate_platoon(config: &PlatoonConfig) -> Result<Trajectory> {
    config.validate()?;
    let n = config.followers.len() + 1;
    let first = config.leader.sample(0.0);
    let mut initial = Vec::with_capacity(n);
    initial.push(VehicleState {
        position: 0.0,
        velocity: first.speed,
        acceleration: first.accel,
    });
    for i in 0..config.followers.len() {
        let ahead = initial[i].position;
        initial.push(VehicleState {
            position: ahead - config.vehicle_length - config.initial_gaps[i],
            velocity: config.initial_speeds[i],
            acceleration: 0.0,
        });
    }
    let mut drivers = vec![None];
    drivers.extend(config.followers.iter().copied().map(Some));
    let leader = config.leader.clone();
    let hook = move |states: &mut [VehicleState], t: f64| {
        let s = leader.sample(t);
        states[0] = VehicleState {
            position: s.offset,
            velocity: s.speed,
            acceleration: s.accel,
        };
    };
    run(RunSpec {
        initial,
        drivers,
        road: Road {
            vehicle_length: config.vehicle_length,
            ring_length: None,
        },
        opts: StepOptions {
            dt: config.dt,
            clamp_velocity: config.clamp_velocity,
            integrator: config.integrator,
            on_collision: config.on_collision,
        },
        n_steps: n_steps(config.duration, config.dt),
        gap_policy: config.gap_policy,
        seed: config.seed,
        leader: Some(Box::new(hook)),
    })
}
