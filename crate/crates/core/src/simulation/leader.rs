use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Motion of the first vehicle of an open-road platoon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeaderProfile {
    Stationary,
    Constant {
        speed: f64,
    },
    /// Speed jumps to `speed` at `start` and holds until the next entry.
    Piecewise {
        schedule: Vec<(f64, f64)>,
    },
    /// `mean + amplitude·sin(2πt / period)`.
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period: f64,
    },
    /// Samples at a fixed step. Positions are taken relative to the first
    /// sample; past the end the last speed is held.
    Recorded {
        dt: f64,
        positions: Vec<f64>,
        speeds: Vec<f64>,
    },
}

/// Leader kinematics at one instant, position relative to `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderSample {
    pub offset: f64,
    pub speed: f64,
    pub accel: f64,
}

impl LeaderProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        match self {
            LeaderProfile::Stationary => Ok(()),
            LeaderProfile::Constant { speed } => {
                if *speed >= 0.0 {
                    Ok(())
                } else {
                    bad(format!("leader speed must be >= 0, got {speed}"))
                }
            }
            LeaderProfile::Piecewise { schedule } => {
                if schedule.is_empty() {
                    return bad("piecewise leader schedule is empty".into());
                }
                if schedule.iter().any(|&(_, v)| !(v >= 0.0)) {
                    return bad("piecewise leader speeds must be >= 0".into());
                }
                if schedule.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return bad("piecewise leader start times must increase".into());
                }
                Ok(())
            }
            LeaderProfile::Sinusoid {
                mean,
                amplitude,
                period,
            } => {
                if !(*period > 0.0) {
                    return bad(format!("sinusoid period must be positive, got {period}"));
                }
                if !(mean - amplitude.abs() >= 0.0) {
                    return bad("sinusoid leader would drive backwards".into());
                }
                Ok(())
            }
            LeaderProfile::Recorded {
                dt,
                positions,
                speeds,
            } => {
                if !(*dt > 0.0) {
                    return bad(format!("recorded leader step must be positive, got {dt}"));
                }
                if positions.is_empty() || positions.len() != speeds.len() {
                    return bad("recorded leader needs equally many positions and speeds".into());
                }
                if speeds.iter().any(|v| !(*v >= 0.0)) {
                    return bad("recorded leader speeds must be >= 0".into());
                }
                Ok(())
            }
        }
    }

    pub fn sample(&self, t: f64) -> LeaderSample {
        match self {
            LeaderProfile::Stationary => LeaderSample {
                offset: 0.0,
                speed: 0.0,
                accel: 0.0,
            },
            LeaderProfile::Constant { speed } => LeaderSample {
                offset: speed * t,
                speed: *speed,
                accel: 0.0,
            },
            LeaderProfile::Piecewise { schedule } => {
                let mut offset = 0.0;
                let mut speed = schedule[0].1;
                let mut t_prev = 0.0;
                for &(start, v) in schedule {
                    if start > t {
                        break;
                    }
                    if start > t_prev {
                        offset += speed * (start - t_prev);
                        t_prev = start;
                    }
                    speed = v;
                }
                offset += speed * (t - t_prev);
                LeaderSample {
                    offset,
                    speed,
                    accel: 0.0,
                }
            }
            LeaderProfile::Sinusoid {
                mean,
                amplitude,
                period,
            } => {
                let w = TAU / period;
                LeaderSample {
                    offset: mean * t + amplitude / w * (1.0 - (w * t).cos()),
                    speed: mean + amplitude * (w * t).sin(),
                    accel: amplitude * w * (w * t).cos(),
                }
            }
            LeaderProfile::Recorded {
                dt,
                positions,
                speeds,
            } => {
                let last = positions.len() - 1;
                let k = t / dt;
                let i = k.floor() as usize;
                if i >= last {
                    let extra = t - last as f64 * dt;
                    return LeaderSample {
                        offset: positions[last] - positions[0] + speeds[last] * extra,
                        speed: speeds[last],
                        accel: 0.0,
                    };
                }
                let frac = k - i as f64;
                let accel = (speeds[i + 1] - speeds[i]) / dt;
                LeaderSample {
                    offset: positions[i] - positions[0] + frac * (positions[i + 1] - positions[i]),
                    speed: speeds[i] + frac * (speeds[i + 1] - speeds[i]),
                    accel,
                }
            }
        }
    }
}
