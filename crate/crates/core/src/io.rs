//! Trajectory CSV exchange and coefficient files.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::FuelCoefficients;
use crate::simulation::Trajectory;

/// Moving-average window applied to differenced velocities (s).
pub const VELOCITY_SMOOTHING_WINDOW: f64 = 0.5;

#[derive(Serialize)]
struct Row {
    time: f64,
    vehicle_id: usize,
    position: f64,
    velocity: f64,
    acceleration: f64,
    gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_c: Option<f64>,
}

/// Writes `time,vehicle_id,position,velocity,acceleration,gap[,d_c]`, one row
/// per vehicle and sample. The leader's gap is left empty; ring positions
/// are wrapped into `[0, L)`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    // Headers are written by hand so an absent d_c column stays absent.
    let mut body = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    let mut header = vec![
        "time",
        "vehicle_id",
        "position",
        "velocity",
        "acceleration",
        "gap",
    ];
    if traj.cautious_distances.is_some() {
        header.push("d_c");
    }
    body.write_record(&header)?;
    for k in 0..traj.n_samples() {
        for (i, states) in traj.states.iter().enumerate() {
            let s = states[k];
            let position = match traj.ring_length {
                Some(l) => s.position.rem_euclid(l),
                None => s.position,
            };
            let gap = traj.gaps[i][k];
            body.serialize(Row {
                time: traj.time(k),
                vehicle_id: i,
                position,
                velocity: s.velocity,
                acceleration: s.acceleration,
                gap: gap.is_finite().then_some(gap),
                d_c: traj.cautious_distances.as_ref().map(|d| d[i][k]),
            })?;
        }
    }
    body.flush()?;
    Ok(())
}

/// One vehicle's uniformly sampled record.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSeries {
    pub id: String,
    pub dt: f64,
    pub time: Vec<f64>,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    /// True when `velocity` was derived from positions.
    pub derived_velocity: bool,
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn parse_field(record: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidData(format!("line {line}: bad {name} value {raw:?}")))
}

/// Central differences of position, then a centred moving average over
/// `VELOCITY_SMOOTHING_WINDOW` (shrinking at the ends).
pub fn derive_velocity(position: &[f64], dt: f64) -> Vec<f64> {
    let n = position.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let raw: Vec<f64> = (0..n)
        .map(|k| match k {
            0 => (position[1] - position[0]) / dt,
            k if k == n - 1 => (position[k] - position[k - 1]) / dt,
            k => (position[k + 1] - position[k - 1]) / (2.0 * dt),
        })
        .collect();
    let half = ((VELOCITY_SMOOTHING_WINDOW / dt).round() as usize) / 2;
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half).min(n - 1);
            raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// Reads `time,vehicle_id,position[,velocity]` (extra columns ignored),
/// grouping rows by vehicle. Each vehicle must be sampled at a constant
/// step. Vehicles are returned in order of first appearance.
pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Vec<VehicleSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    let need = |name: &str| {
        column(&headers, name).ok_or_else(|| Error::InvalidData(format!("missing column {name:?}")))
    };
    let (ti, vi, pi) = (need("time")?, need("vehicle_id")?, need("position")?);
    let vel = column(&headers, "velocity");

    let mut order = Vec::new();
    let mut rows: BTreeMap<String, Vec<(f64, f64, Option<f64>)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(vi).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(Error::InvalidData(format!("line {line}: empty vehicle_id")));
        }
        let t = parse_field(&rec, ti, "time", line)?;
        let x = parse_field(&rec, pi, "position", line)?;
        let v = match vel {
            Some(c) if !rec.get(c).unwrap_or("").trim().is_empty() => {
                Some(parse_field(&rec, c, "velocity", line)?)
            }
            _ => None,
        };
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id);
            Vec::new()
        });
        entry.push((t, x, v));
    }
    if order.is_empty() {
        return Err(Error::InvalidData("trajectory file has no rows".into()));
    }

    order
        .into_iter()
        .map(|id| {
            let mut r = rows.remove(&id).expect("grouped id");
            r.sort_by(|a, b| a.0.total_cmp(&b.0));
            let time: Vec<f64> = r.iter().map(|x| x.0).collect();
            let position: Vec<f64> = r.iter().map(|x| x.1).collect();
            let dt = if time.len() > 1 {
                (time[time.len() - 1] - time[0]) / (time.len() - 1) as f64
            } else {
                0.0
            };
            if time.len() > 1 {
                if !(dt > 0.0) {
                    return Err(Error::InvalidData(format!(
                        "vehicle {id}: repeated time stamps"
                    )));
                }
                if time
                    .windows(2)
                    .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt.max(1.0))
                {
                    return Err(Error::InvalidData(format!(
                        "vehicle {id}: samples are not uniformly spaced"
                    )));
                }
            }
            let given: Option<Vec<f64>> = r.iter().map(|x| x.2).collect();
            let derived_velocity = given.is_none();
            let velocity = given.unwrap_or_else(|| derive_velocity(&position, dt));
            Ok(VehicleSeries {
                id,
                dt,
                time,
                position,
                velocity,
                derived_velocity,
            })
        })
        .collect()
}

/// Leader/follower series restricted to their common time stamps.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub dt: f64,
    pub leader_position: Vec<f64>,
    pub leader_speed: Vec<f64>,
    pub follower_position: Vec<f64>,
    pub follower_speed: Vec<f64>,
}

pub fn align_pair(leader: &VehicleSeries, follower: &VehicleSeries) -> Result<AlignedPair> {
    if (leader.dt - follower.dt).abs() > 1e-9 * leader.dt.max(1.0) {
        return Err(Error::InvalidData(format!(
            "vehicles {} and {} use different sampling steps",
            leader.id, follower.id
        )));
    }
    let dt = leader.dt;
    let start = leader.time[0].max(follower.time[0]);
    let end = leader
        .time
        .last()
        .unwrap()
        .min(*follower.time.last().unwrap());
    if !(end > start) {
        return Err(Error::InvalidData(format!(
            "vehicles {} and {} do not overlap in time",
            leader.id, follower.id
        )));
    }
    let index = |s: &VehicleSeries, t: f64| ((t - s.time[0]) / dt).round() as usize;
    let n = ((end - start) / dt).round() as usize + 1;
    let (l0, f0) = (index(leader, start), index(follower, start));
    Ok(AlignedPair {
        dt,
        leader_position: leader.position[l0..l0 + n].to_vec(),
        leader_speed: leader.velocity[l0..l0 + n].to_vec(),
        follower_position: follower.position[f0..f0 + n].to_vec(),
        follower_speed: follower.velocity[f0..f0 + n].to_vec(),
    })
}

pub fn read_fuel_coefficients<R: Read>(input: R) -> Result<FuelCoefficients> {
    let c: FuelCoefficients = serde_json::from_reader(input)?;
    c.validate()?;
    Ok(c)
}
