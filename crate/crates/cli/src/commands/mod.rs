pub mod calibrate;
pub mod fit_sigmoid;
pub mod fundamental_diagram;
pub mod metrics;
pub mod ring;
pub mod simulate;
pub mod stability_map;

use std::collections::hash_map::RandomState;
use std::hash::{BuildHasher, Hasher};
use std::path::{Path, PathBuf};

use serde::Serialize;

use carfollow::simulation::{EventKind, Trajectory};
use carfollow::Branch;

use crate::error::CliResult;
use crate::output::Output;
use crate::svg::{Plot, PALETTE};

pub struct Context<'a> {
    pub command: &'static str,
    pub config: &'a Path,
    pub seed: Option<u64>,
}

/// Where a seed came from, recorded in the manifest.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Config,
    Generated,
}

impl Context<'_> {
    /// The flag wins over the configuration; with neither, a fresh seed is
    /// drawn and recorded so the run can be repeated.
    pub fn seed(&self, from_config: Option<u64>) -> (u64, SeedSource) {
        match (self.seed, from_config) {
            (Some(s), _) => (s, SeedSource::Flag),
            (None, Some(s)) => (s, SeedSource::Config),
            (None, None) => {
                let mut h = RandomState::new().build_hasher();
                h.write_u128(
                    std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .map(|d| d.as_nanos())
                        .unwrap_or(0),
                );
                (h.finish(), SeedSource::Generated)
            }
        }
    }

    pub fn resolve(&self, relative: &Path) -> PathBuf {
        crate::config::resolve(self.config, relative)
    }
}

/// Run manifest written next to the results.
#[derive(Serialize)]
pub struct Manifest<'a, S: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_source: Option<SeedSource>,
    pub files: Vec<String>,
    pub summary: &'a S,
}

pub fn write_manifest<S: Serialize>(
    ctx: &Context,
    out: &mut Output,
    seed: Option<(u64, SeedSource)>,
    summary: &S,
) -> CliResult<()> {
    let mut files: Vec<String> = out
        .written()
        .iter()
        .filter_map(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .collect();
    files.sort();
    files.dedup();
    let manifest = Manifest {
        command: ctx.command,
        version: env!("CARGO_PKG_VERSION"),
        seed: seed.map(|s| s.0),
        seed_source: seed.map(|s| s.1),
        files,
        summary,
    };
    out.write_json("run.json", &manifest)
}

pub fn write_trajectory(out: &mut Output, name: &str, traj: &Trajectory) -> CliResult<()> {
    out.write_with(name, |w| Ok(carfollow::io::write_trajectory_csv(traj, w)?))
}

#[derive(Serialize)]
pub struct EventRow {
    time: f64,
    vehicle: usize,
    kind: &'static str,
    detail: String,
}

pub fn event_rows(traj: &Trajectory) -> Vec<EventRow> {
    traj.events
        .iter()
        .map(|e| {
            let (kind, detail) = match e.kind {
                EventKind::Collision { gap } => ("collision", format!("gap={gap}")),
                EventKind::NegativeVelocity { velocity } => {
                    ("negative_velocity", format!("velocity={velocity}"))
                }
                EventKind::VelocityClamped => ("velocity_clamped", String::new()),
                EventKind::BranchSwitch { to } => {
                    let to = match to {
                        Branch::Idm => "idm",
                        Branch::Sigmoid => "sigmoid",
                    };
                    ("branch_switch", format!("to={to}"))
                }
            };
            EventRow {
                time: traj.time(e.step),
                vehicle: e.vehicle,
                kind,
                detail,
            }
        })
        .collect()
}

/// Every `stride`-th sample so that long runs stay drawable.
pub fn stride(n_samples: usize, target: usize) -> usize {
    n_samples.div_ceil(target.max(1)).max(1)
}

pub fn time_velocity_plot(traj: &Trajectory, title: &str) -> String {
    let step = stride(traj.n_samples(), 2000);
    let mut plot = Plot::new(title, "time (s)", "velocity (m/s)");
    for (i, states) in traj.states.iter().enumerate() {
        let pts = states
            .iter()
            .enumerate()
            .step_by(step)
            .map(|(k, s)| (traj.time(k), s.velocity))
            .collect();
        let name = vehicle_label(traj, i);
        plot = plot.line(name.as_deref(), PALETTE[i % PALETTE.len()], pts);
    }
    plot.render()
}

/// Position against time; ring positions wrap, with the line broken at each
/// wrap.
pub fn time_space_plot(traj: &Trajectory, title: &str) -> String {
    let step = stride(traj.n_samples(), 2000);
    let mut plot = Plot::new(title, "time (s)", "position (m)");
    for (i, states) in traj.states.iter().enumerate() {
        let mut pts = Vec::new();
        let mut prev: Option<f64> = None;
        for (k, s) in states.iter().enumerate().step_by(step) {
            let x = match traj.ring_length {
                Some(l) => s.position.rem_euclid(l),
                None => s.position,
            };
            if prev.is_some_and(|p| x < p) {
                pts.push((f64::NAN, f64::NAN));
            }
            prev = Some(x);
            pts.push((traj.time(k), x));
        }
        let name = vehicle_label(traj, i);
        plot = plot.line(name.as_deref(), PALETTE[i % PALETTE.len()], pts);
    }
    plot.render()
}

/// Legend entries only for small platoons.
fn vehicle_label(traj: &Trajectory, i: usize) -> Option<String> {
    (traj.n_vehicles() <= 8).then(|| {
        if i == 0 && traj.ring_length.is_none() {
            "leader".to_string()
        } else {
            format!("vehicle {i}")
        }
    })
}

/// Forward-backward central differences of a uniformly sampled series.
pub fn gradient(series: &[f64], dt: f64) -> Vec<f64> {
    let n = series.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| match k {
            0 => (series[1] - series[0]) / dt,
            k if k == n - 1 => (series[k] - series[k - 1]) / dt,
            k => (series[k + 1] - series[k - 1]) / (2.0 * dt),
        })
        .collect()
}
