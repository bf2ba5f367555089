use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::{Error, Result};

/// Ring-road macroscopic state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowMeasurement {
    /// veh/m
    pub density: f64,
    /// veh/s
    pub flow: f64,
    /// Space-mean speed over the window (m/s).
    pub mean_speed: f64,
}

/// `ρ = n/L`, space-mean speed over the last `window` seconds, `Q = ρ v̄`.
pub fn measure_flow_density(traj: &Trajectory, window: f64) -> Result<FlowMeasurement> {
    let l = traj.ring_length.ok_or_else(|| {
        Error::InvalidData("flow-density measurement needs a ring trajectory".into())
    })?;
    let samples = traj.n_samples();
    if samples == 0 {
        return Err(Error::InvalidData("empty trajectory".into()));
    }
    if !(window >= 0.0) || window > traj.duration() + 1e-9 {
        return Err(Error::InvalidData(format!(
            "window {window} s exceeds the {} s run",
            traj.duration()
        )));
    }
    let count = ((window / traj.dt).round() as usize + 1).min(samples);
    let first = samples - count;
    let mut sum = 0.0;
    for vehicle in &traj.states {
        sum += vehicle[first..].iter().map(|s| s.velocity).sum::<f64>();
    }
    let mean_speed = sum / (count * traj.n_vehicles()) as f64;
    let density = traj.n_vehicles() as f64 / l;
    Ok(FlowMeasurement {
        density,
        flow: density * mean_speed,
        mean_speed,
    })
}

/// `|a|` at or below this counts as coasting (m/s²).
pub const COASTING_ACCEL: f64 = 0.05;
/// Minimum duration of a coasting episode (s).
pub const COASTING_MIN_DURATION: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopPhase {
    Accelerating,
    Decelerating,
    Coasting,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopSample {
    pub gap: f64,
    pub speed: f64,
    pub phase: LoopPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingVelocityLoop {
    pub samples: Vec<LoopSample>,
    pub coasting_fraction: f64,
}

/// Phase-tagged `(gap, speed)` sequence of one vehicle.
///
/// Samples with `|a| <= COASTING_ACCEL` inside a run lasting at least
/// `COASTING_MIN_DURATION` are coasting; shorter quiet runs take the sign of
/// their acceleration.
pub fn spacing_velocity_loop(traj: &Trajectory, vehicle: usize) -> Result<SpacingVelocityLoop> {
    if vehicle >= traj.n_vehicles() {
        return Err(Error::InvalidData(format!("no vehicle {vehicle}")));
    }
    let states = &traj.states[vehicle];
    let gaps = &traj.gaps[vehicle];
    let min_run = (COASTING_MIN_DURATION / traj.dt).round().max(1.0) as usize;
    let quiet: Vec<bool> = states
        .iter()
        .map(|s| s.acceleration.abs() <= COASTING_ACCEL)
        .collect();
    let mut coasting = vec![false; states.len()];
    let mut i = 0;
    while i < quiet.len() {
        if !quiet[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < quiet.len() && quiet[i] {
            i += 1;
        }
        if i - start >= min_run {
            coasting[start..i].iter_mut().for_each(|c| *c = true);
        }
    }
    let samples: Vec<LoopSample> = states
        .iter()
        .zip(gaps)
        .zip(&coasting)
        .map(|((s, &gap), &c)| LoopSample {
            gap,
            speed: s.velocity,
            phase: if c {
                LoopPhase::Coasting
            } else if s.acceleration >= 0.0 {
                LoopPhase::Accelerating
            } else {
                LoopPhase::Decelerating
            },
        })
        .collect();
    let n_coast = coasting.iter().filter(|&&c| c).count();
    let coasting_fraction = if samples.is_empty() {
        0.0
    } else {
        n_coast as f64 / samples.len() as f64
    };
    Ok(SpacingVelocityLoop {
        samples,
        coasting_fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveDirection {
    /// Speed falling through the level (jam entry).
    Deceleration,
    /// Speed rising through the level (jam exit).
    Acceleration,
}

/// Propagation speed of an iso-velocity front (m/s, negative = upstream).
///
/// Starting from the first crossing of `level` by vehicle 0, the next
/// crossing of each following vehicle is chained and the crossing positions
/// are regressed on the crossing times. Returns `None` when fewer than three
/// vehicles cross.
pub fn wave_speed(traj: &Trajectory, level: f64, direction: WaveDirection) -> Option<f64> {
    let crossing = |vehicle: usize, after: f64| -> Option<(f64, f64)> {
        let states = &traj.states[vehicle];
        for k in 1..states.len() {
            let t = traj.time(k);
            if t <= after {
                continue;
            }
            let (v0, v1) = (states[k - 1].velocity, states[k].velocity);
            let hit = match direction {
                WaveDirection::Deceleration => v0 > level && v1 <= level,
                WaveDirection::Acceleration => v0 < level && v1 >= level,
            };
            if hit {
                let f = (level - v0) / (v1 - v0);
                let x = states[k - 1].position + f * (states[k].position - states[k - 1].position);
                return Some((t - traj.dt + f * traj.dt, x));
            }
        }
        None
    };
    let mut points = Vec::new();
    let mut after = -1.0;
    for vehicle in 0..traj.n_vehicles() {
        match crossing(vehicle, after) {
            Some((t, x)) => {
                points.push((t, x));
                after = t;
            }
            None => break,
        }
    }
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
