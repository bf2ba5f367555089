use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    analysis::FlowMeasurement, check_run_settings, measure_flow_density, n_steps, run,
    CollisionPolicy, Driver, Integrator, Road, RunSpec, StepOptions, Trajectory, VehicleState,
};
use crate::equilibrium::equilibrium_speed;
use crate::error::{Error, Result};
use crate::model::RandomGapPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RingInit {
    /// Equal gaps, every vehicle at `initial_speed`.
    Homogeneous,
    /// Vehicles at rest, packed at `jam_gap` (default: their jam distance); the free space is
    /// in front of vehicle 0.
    Jam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingConfig {
    pub circumference: f64,
    /// One per vehicle, in driving order.
    pub drivers: Vec<Driver>,
    #[serde(default = "super::default_length")]
    pub vehicle_length: f64,
    pub init: RingInit,
    /// Speed of the homogeneous start; the first driver's steady-state
    /// speed for the uniform gap when absent.
    #[serde(default)]
    pub initial_speed: Option<f64>,
    /// Speed taken off vehicle 0 at `t = 0` (m/s).
    #[serde(default)]
    pub perturbation: f64,
    /// Gap used by the jam initialisation; each driver's `s0` when absent.
    #[serde(default)]
    pub jam_gap: Option<f64>,
    #[serde(default = "super::default_dt")]
    pub dt: f64,
    pub duration: f64,
    #[serde(default = "super::default_true")]
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

impl RingConfig {
    pub fn homogeneous(
        circumference: f64,
        driver: Driver,
        n_vehicles: usize,
        duration: f64,
    ) -> Self {
        Self {
            circumference,
            drivers: vec![driver; n_vehicles],
            vehicle_length: super::default_length(),
            init: RingInit::Homogeneous,
            initial_speed: None,
            perturbation: 0.0,
            jam_gap: None,
            dt: super::DEFAULT_DT,
            duration,
            clamp_velocity: true,
            gap_policy: None,
            seed: 0,
            on_collision: CollisionPolicy::Halt,
            integrator: Integrator::Ballistic,
        }
    }

    pub fn n_vehicles(&self) -> usize {
        self.drivers.len()
    }

    pub fn density(&self) -> f64 {
        self.n_vehicles() as f64 / self.circumference
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vehicles();
        if n == 0 {
            return Err(Error::InvalidParams(
                "a ring needs at least one vehicle".into(),
            ));
        }
        if !(self.circumference > 0.0) {
            return Err(Error::InvalidParams(format!(
                "circumference must be positive, got {}",
                self.circumference
            )));
        }
        if !(n as f64 * self.vehicle_length < self.circumference) {
            return Err(Error::InvalidParams(format!(
                "{n} vehicles of length {} do not fit on a {} m ring",
                self.vehicle_length, self.circumference
            )));
        }
        if self.init == RingInit::Jam {
            if self.jam_gap.is_some_and(|g| !(g > 0.0)) {
                return Err(Error::InvalidParams("jam gap must be positive".into()));
            }
            let packed: f64 = self
                .drivers
                .iter()
                .map(|d| self.jam_gap_for(d) + self.vehicle_length)
                .sum();
            if packed > self.circumference {
                return Err(Error::InvalidParams(
                    "jam initialisation does not fit on the ring".into(),
                ));
            }
        }
        if self.initial_speed.is_some_and(|v| !(v >= 0.0)) || !(self.perturbation >= 0.0) {
            return Err(Error::InvalidParams(
                "initial speed and perturbation must be >= 0".into(),
            ));
        }
        check_run_settings(self.dt, self.duration, self.vehicle_length)?;
        for d in &self.drivers {
            d.params.validate(d.model)?;
        }
        if let Some(p) = &self.gap_policy {
            p.validate()?;
        }
        Ok(())
    }

    fn jam_gap_for(&self, d: &Driver) -> f64 {
        self.jam_gap.unwrap_or(d.params.jam_distance)
    }

    /// Uniform gap of the homogeneous start.
    pub fn homogeneous_gap(&self) -> f64 {
        self.circumference / self.n_vehicles() as f64 - self.vehicle_length
    }

    fn initial_states(&self) -> Result<Vec<VehicleState>> {
        let n = self.n_vehicles();
        let l = self.vehicle_length;
        let mut states = Vec::with_capacity(n);
        match self.init {
            RingInit::Homogeneous => {
                let pitch = self.circumference / n as f64;
                let speed = match self.initial_speed {
                    Some(v) => v,
                    None => {
                        let d = &self.drivers[0];
                        equilibrium_speed(d.model, self.homogeneous_gap(), &d.params)?
                    }
                };
                for i in 0..n {
                    states.push(VehicleState {
                        position: -(i as f64) * pitch,
                        velocity: speed,
                        acceleration: 0.0,
                    });
                }
                states[0].velocity = (states[0].velocity - self.perturbation).max(0.0);
            }
            RingInit::Jam => {
                let mut x = 0.0;
                states.push(VehicleState {
                    position: x,
                    velocity: 0.0,
                    acceleration: 0.0,
                });
                for d in &self.drivers[1..] {
                    x -= l + self.jam_gap_for(d);
                    states.push(VehicleState {
                        position: x,
                        velocity: 0.0,
                        acceleration: 0.0,
                    });
                }
            }
        }
        Ok(states)
    }
}

/// Runs vehicles on a closed loop; every vehicle follows the one ahead.
pub fn simulate_ring(config: &RingConfig) -> Result<Trajectory> {
    config.validate()?;
    run(RunSpec {
        initial: config.initial_states()?,
        drivers: config.drivers.iter().copied().map(Some).collect(),
        road: Road {
            vehicle_length: config.vehicle_length,
            ring_length: Some(config.circumference),
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
        leader: None,
    })
}

/// Flow of both initialisations at one vehicle count. A run that halted on
/// a collision has no measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_vehicles: usize,
    pub density: f64,
    pub homogeneous: Option<FlowMeasurement>,
    pub jam: Option<FlowMeasurement>,
}

/// Runs both initialisations for every vehicle count, in parallel.
///
/// Drivers are taken cyclically from `base.drivers`. Run `j` of point `i`
/// is seeded with `base.seed ^ (2i + j)`.
pub fn ring_density_sweep(
    base: &RingConfig,
    counts: &[usize],
    window: f64,
) -> Result<Vec<SweepPoint>> {
    if base.drivers.is_empty() {
        return Err(Error::InvalidParams(
            "sweep needs at least one driver".into(),
        ));
    }
    counts
        .par_iter()
        .enumerate()
        .map(|(idx, &n)| {
            let mut cfg = base.clone();
            cfg.drivers = (0..n)
                .map(|i| base.drivers[i % base.drivers.len()])
                .collect();
            let mut flows = [None, None];
            for (j, init) in [RingInit::Homogeneous, RingInit::Jam]
                .into_iter()
                .enumerate()
            {
                cfg.init = init;
                cfg.seed = base.seed ^ (2 * idx + j) as u64;
                let traj = simulate_ring(&cfg)?;
                if traj.halted_at.is_none() {
                    flows[j] = Some(measure_flow_density(&traj, window)?);
                }
            }
            Ok(SweepPoint {
                n_vehicles: n,
                density: cfg.density(),
                homogeneous: flows[0],
                jam: flows[1],
            })
        })
        .collect()
}

/// Density range over which the homogeneous branch carries at least
/// `(1 + margin)` times the jam-branch flow. Points missing either
/// measurement are ignored.
pub fn bistable_window(points: &[SweepPoint], margin: f64) -> Option<(f64, f64)> {
    let split: Vec<f64> = points
        .iter()
        .filter(|p| match (p.homogeneous, p.jam) {
            (Some(h), Some(j)) => h.flow > (1.0 + margin) * j.flow,
            _ => false,
        })
        .map(|p| p.density)
        .collect();
    let lo = split.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = split.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo <= hi).then_some((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Model, ModelParams};

    fn point(n: usize, h: Option<f64>, j: Option<f64>) -> SweepPoint {
        let m = |q: f64| FlowMeasurement {
            density: n as f64 / 100.0,
            flow: q,
            mean_speed: q * 100.0 / n as f64,
        };
        SweepPoint {
            n_vehicles: n,
            density: n as f64 / 100.0,
            homogeneous: h.map(m),
            jam: j.map(m),
        }
    }

    #[test]
    fn window_spans_split_points_and_skips_missing_runs() {
        let points = [
            point(1, Some(1.0), Some(1.0)),
            point(2, Some(1.2), Some(1.0)),
            point(3, Some(1.2), None),
            point(4, Some(1.1), Some(1.0)),
            point(5, Some(1.0), Some(0.99)),
        ];
        assert_eq!(bistable_window(&points, 0.05), Some((0.02, 0.04)));
        assert_eq!(bistable_window(&points[..1], 0.05), None);
    }

    #[test]
    fn jam_start_packs_vehicles_behind_the_free_space() {
        let p = ModelParams::idm(1.5, 2.0, 25.0, 1.2, 2.0);
        let mut cfg = RingConfig::homogeneous(300.0, Driver::new(Model::Idm, p), 10, 10.0);
        cfg.init = RingInit::Jam;
        cfg.jam_gap = Some(3.0);
        let states = cfg.initial_states().unwrap();
        for w in states.windows(2) {
            assert!((w[0].position - w[1].position - 8.0).abs() < 1e-12);
        }
        assert!(states.iter().all(|s| s.velocity == 0.0));
        cfg.jam_gap = Some(30.0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn homogeneous_start_defaults_to_the_steady_speed() {
        let p = ModelParams::idm(1.5, 2.0, 25.0, 1.2, 2.0);
        let cfg = RingConfig::homogeneous(400.0, Driver::new(Model::Idm, p), 16, 10.0);
        let v = cfg.initial_states().unwrap()[3].velocity;
        let eq = crate::equilibrium::equilibrium(Model::Idm, v, &p).unwrap();
        assert!((eq.spacing - cfg.homogeneous_gap()).abs() < 1e-6);
    }
}
