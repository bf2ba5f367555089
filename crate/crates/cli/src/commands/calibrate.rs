use std::fs::File;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use carfollow::equilibrium::DEFAULT_VEHICLE_LENGTH;
use carfollow::estimation::{
    calibrate_ga, simulate_follower, CalibrationProblem, CalibrationResult, GaSettings, ParamBounds,
};
use carfollow::io::{align_pair, read_trajectory_csv, VehicleSeries};
use carfollow::Model;

use super::{write_manifest, Context};
use crate::config::load;
use crate::error::{CliError, CliResult};
use crate::output::Output;
use crate::svg::{Plot, PALETTE};

/// Vehicle identifier given as a number or a string.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum VehicleId {
    Number(u64),
    Text(String),
}

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VehicleId::Number(n) => write!(f, "{n}"),
            VehicleId::Text(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrateConfig {
    /// Trajectory CSV, relative to this file.
    data: PathBuf,
    leader_id: VehicleId,
    follower_id: VehicleId,
    model: Model,
    #[serde(default = "default_length")]
    vehicle_length: f64,
    #[serde(default)]
    bounds: ParamBounds,
    #[serde(default)]
    ga: GaSettings,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default = "yes")]
    clamp_velocity: bool,
}

fn default_length() -> f64 {
    DEFAULT_VEHICLE_LENGTH
}

fn yes() -> bool {
    true
}

/// Reads a trajectory CSV and returns the series of two vehicles.
pub fn load_pair(
    ctx: &Context,
    data: &std::path::Path,
    leader: &VehicleId,
    follower: &VehicleId,
) -> CliResult<(VehicleSeries, VehicleSeries)> {
    let path = ctx.resolve(data);
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let all = read_trajectory_csv(file)
        .map_err(|e| CliError::from(e).context(&path.display().to_string()))?;
    let find = |id: &VehicleId| {
        let want = id.to_string();
        all.iter().find(|s| s.id == want).cloned().ok_or_else(|| {
            CliError::Config(format!("{}: no vehicle with id {want:?}", path.display()))
        })
    };
    Ok((find(leader)?, find(follower)?))
}

#[derive(Serialize)]
struct Report<'a> {
    data: String,
    leader_id: String,
    follower_id: String,
    samples: usize,
    dt: f64,
    #[serde(flatten)]
    result: &'a CalibrationResult,
}

#[derive(Serialize)]
struct Row {
    time: f64,
    observed_gap: f64,
    simulated_gap: f64,
    observed_speed: f64,
    simulated_speed: f64,
}

pub fn run(ctx: &Context, out: &mut Output) -> CliResult<String> {
    let cfg: CalibrateConfig = load(ctx.config)?;
    let (leader, follower) = load_pair(ctx, &cfg.data, &cfg.leader_id, &cfg.follower_id)?;
    let pair = align_pair(&leader, &follower)?;
    let seed = ctx.seed(cfg.seed);
    let problem = CalibrationProblem {
        model: cfg.model,
        dt: pair.dt,
        leader_position: pair.leader_position,
        leader_speed: pair.leader_speed,
        follower_position: pair.follower_position,
        follower_speed: pair.follower_speed,
        vehicle_length: cfg.vehicle_length,
        bounds: cfg.bounds,
        ga: cfg.ga,
        seed: seed.0,
        clamp_velocity: cfg.clamp_velocity,
    };
    let result = calibrate_ga(&problem)?;
    let run = simulate_follower(&problem, &result.params)?;
    let observed = problem.observed_gaps();

    out.write_json(
        "calibration.json",
        &Report {
            data: cfg.data.display().to_string(),
            leader_id: cfg.leader_id.to_string(),
            follower_id: cfg.follower_id.to_string(),
            samples: problem.n_samples(),
            dt: problem.dt,
            result: &result,
        },
    )?;
    let rows: Vec<Row> = (0..run.gaps.len().min(observed.len()))
        .map(|k| Row {
            time: k as f64 * problem.dt,
            observed_gap: observed[k],
            simulated_gap: run.gaps[k],
            observed_speed: problem.follower_speed[k],
            simulated_speed: run.speeds[k],
        })
        .collect();
    out.write_rows("simulated.csv", &rows)?;
    let series = |f: fn(&Row) -> f64| rows.iter().map(|r| (r.time, f(r))).collect::<Vec<_>>();
    out.write_svg("overlay_spacing.svg", || {
        Plot::new(
            &format!(
                "Spacing of vehicle {}: observed and calibrated",
                cfg.follower_id
            ),
            "time (s)",
            "spacing (m)",
        )
        .line(Some("observed"), PALETTE[0], series(|r| r.observed_gap))
        .line(Some("simulated"), PALETTE[1], series(|r| r.simulated_gap))
        .render()
    })?;
    out.write_svg("overlay_speed.svg", || {
        Plot::new(
            &format!(
                "Speed of vehicle {}: observed and calibrated",
                cfg.follower_id
            ),
            "time (s)",
            "speed (m/s)",
        )
        .line(Some("observed"), PALETTE[0], series(|r| r.observed_speed))
        .line(Some("simulated"), PALETTE[1], series(|r| r.simulated_speed))
        .render()
    })?;
    out.write_svg("convergence.svg", || {
        let pts = result
            .history
            .iter()
            .enumerate()
            .map(|(g, &u)| (g as f64, u))
            .collect();
        Plot::new(
            "Best objective per generation",
            "generation",
            "Theil's U of spacing",
        )
        .line(None, PALETTE[0], pts)
        .render()
    })?;

    write_manifest(ctx, out, Some(seed), &result.params)?;
    Ok(format!(
        "{} calibrated on {} samples: U = {:.5}, spacing RMSE {:.4} m, speed RMSE {:.4} m/s",
        cfg.model,
        problem.n_samples(),
        result.objective,
        result.rmse_spacing,
        result.rmse_speed
    ))
}
