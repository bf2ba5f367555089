use std::fs::File;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use carfollow::equilibrium::DEFAULT_VEHICLE_LENGTH;
use carfollow::estimation::{fuel_from_series, jerk, rmse, theils_u, FuelCoefficients};
use carfollow::io::{align_pair, read_fuel_coefficients, AlignedPair};

use super::calibrate::{load_pair, VehicleId};
use super::{gradient, write_manifest, Context};
use crate::config::load;
use crate::error::{CliError, CliResult};
use crate::output::Output;
use crate::svg::{Plot, PALETTE};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsConfig {
    /// Trajectory CSV holding the observed pair.
    observed: PathBuf,
    /// Trajectory CSV holding the same pair as simulated; optional.
    #[serde(default)]
    simulated: Option<PathBuf>,
    leader_id: VehicleId,
    follower_id: VehicleId,
    #[serde(default = "default_length")]
    vehicle_length: f64,
    /// Fuel coefficient JSON; fuel totals are skipped without it.
    #[serde(default)]
    fuel_coefficients: Option<PathBuf>,
}

fn default_length() -> f64 {
    DEFAULT_VEHICLE_LENGTH
}

#[derive(Serialize, Clone)]
struct Metric {
    metric: String,
    value: f64,
}

/// Follower kinematics derived from one aligned pair.
struct Follower {
    dt: f64,
    gap: Vec<f64>,
    speed: Vec<f64>,
    accel: Vec<f64>,
    jerk: Vec<f64>,
}

impl Follower {
    fn new(pair: &AlignedPair, length: f64) -> Self {
        let gap = pair
            .leader_position
            .iter()
            .zip(&pair.follower_position)
            .map(|(l, f)| l - f - length)
            .collect();
        let accel = gradient(&pair.follower_speed, pair.dt);
        let jerk = jerk(&accel, pair.dt);
        Self {
            dt: pair.dt,
            gap,
            speed: pair.follower_speed.clone(),
            accel,
            jerk,
        }
    }
}

fn jerk_stats(tag: &str, j: &[f64], out: &mut Vec<Metric>) {
    let n = j.len().max(1) as f64;
    let mut push = |name: &str, value: f64| {
        out.push(Metric {
            metric: format!("{name}_{tag}"),
            value,
        })
    };
    push("jerk_mean_abs", j.iter().map(|x| x.abs()).sum::<f64>() / n);
    push(
        "jerk_rms",
        (j.iter().map(|x| x * x).sum::<f64>() / n).sqrt(),
    );
    push("jerk_max_abs", j.iter().fold(0.0, |m, x| m.max(x.abs())));
}

fn fuel(tag: &str, f: &Follower, k: &FuelCoefficients, out: &mut Vec<Metric>) -> CliResult<()> {
    let report = fuel_from_series(&f.speed, &f.accel, f.dt, k)?;
    out.push(Metric {
        metric: format!("fuel_total_{tag}"),
        value: report.total,
    });
    Ok(())
}

pub fn run(ctx: &Context, out: &mut Output) -> CliResult<String> {
    let cfg: MetricsConfig = load(ctx.config)?;
    let pair_of = |path: &PathBuf| -> CliResult<Follower> {
        let (l, f) = load_pair(ctx, path, &cfg.leader_id, &cfg.follower_id)?;
        Ok(Follower::new(&align_pair(&l, &f)?, cfg.vehicle_length))
    };
    let observed = pair_of(&cfg.observed)?;
    let simulated = cfg.simulated.as_ref().map(pair_of).transpose()?;
    let coeffs = match &cfg.fuel_coefficients {
        Some(p) => {
            let path = ctx.resolve(p);
            let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
            Some(
                read_fuel_coefficients(file)
                    .map_err(|e| CliError::from(e).context(&path.display().to_string()))?,
            )
        }
        None => None,
    };

    let mut metrics = Vec::new();
    if let Some(sim) = &simulated {
        if sim.gap.len() != observed.gap.len() || (sim.dt - observed.dt).abs() > 1e-9 {
            return Err(CliError::Config(format!(
                "observed and simulated series differ: {} samples at {} s vs {} at {} s",
                observed.gap.len(),
                observed.dt,
                sim.gap.len(),
                sim.dt
            )));
        }
        for (name, value) in [
            ("rmse_spacing", rmse(&observed.gap, &sim.gap)?),
            ("rmse_speed", rmse(&observed.speed, &sim.speed)?),
            ("rmse_acceleration", rmse(&observed.accel, &sim.accel)?),
            ("theil_u_spacing", theils_u(&observed.gap, &sim.gap)?),
            ("theil_u_speed", theils_u(&observed.speed, &sim.speed)?),
        ] {
            metrics.push(Metric {
                metric: name.into(),
                value,
            });
        }
    }
    jerk_stats("observed", &observed.jerk, &mut metrics);
    if let Some(sim) = &simulated {
        jerk_stats("simulated", &sim.jerk, &mut metrics);
    }
    if let Some(k) = &coeffs {
        fuel("observed", &observed, k, &mut metrics)?;
        if let Some(sim) = &simulated {
            fuel("simulated", sim, k, &mut metrics)?;
        }
    }
    out.write_rows("metrics.csv", &metrics)?;
    out.write_svg("jerk.svg", || {
        let series = |f: &Follower| {
            f.jerk
                .iter()
                .enumerate()
                .map(|(k, &j)| (k as f64 * f.dt, j))
                .collect::<Vec<_>>()
        };
        let mut plot = Plot::new(
            &format!("Jerk of vehicle {}", cfg.follower_id),
            "time (s)",
            "jerk (m/s³)",
        )
        .line(Some("observed"), PALETTE[0], series(&observed));
        if let Some(sim) = &simulated {
            plot = plot.line(Some("simulated"), PALETTE[1], series(sim));
        }
        plot.render()
    })?;
    write_manifest(ctx, out, None, &metrics)?;
    Ok(metrics
        .iter()
        .map(|m| format!("{}: {:.6}", m.metric, m.value))
        .collect::<Vec<_>>()
        .join("\n"))
}
