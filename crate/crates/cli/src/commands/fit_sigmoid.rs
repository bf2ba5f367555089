use std::fs::File;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use carfollow::estimation::{fit_sigmoid, min_max_normalize, SigmoidFit};

use super::{write_manifest, Context};
use crate::config::load;
use crate::error::{CliError, CliResult};
use crate::output::Output;
use crate::svg::{Plot, PALETTE};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitConfig {
    /// CSV file with a header row.
    data: PathBuf,
    x: String,
    y: String,
    /// Keep only rows whose `vehicle_id` column equals this value.
    #[serde(default)]
    vehicle_id: Option<String>,
    /// Scale `y` onto [0, 1] before fitting.
    #[serde(default)]
    normalize: bool,
    /// Keep only rows with `x` inside this closed interval.
    #[serde(default)]
    x_range: Option<(f64, f64)>,
}

#[derive(Serialize)]
struct Report<'a> {
    data: String,
    x: &'a str,
    y: &'a str,
    points: usize,
    normalized: bool,
    #[serde(flatten)]
    fit: &'a SigmoidFit,
}

fn read_columns(path: &std::path::Path, cfg: &FitConfig) -> CliResult<(Vec<f64>, Vec<f64>)> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("{}: no column {name:?}", path.display())))
    };
    let (xi, yi) = (col(&cfg.x)?, col(&cfg.y)?);
    let id = match &cfg.vehicle_id {
        Some(_) => Some(col("vehicle_id")?),
        None => None,
    };
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let (Some(i), Some(want)) = (id, &cfg.vehicle_id) {
            if record.get(i) != Some(want.as_str()) {
                continue;
            }
        }
        let num = |i: usize, name: &str| {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    CliError::Config(format!(
                        "{} row {}: bad {name} value {raw:?}",
                        path.display(),
                        line + 2
                    ))
                })
        };
        let x = num(xi, &cfg.x)?;
        if cfg.x_range.is_some_and(|(lo, hi)| x < lo || x > hi) {
            continue;
        }
        xs.push(x);
        ys.push(num(yi, &cfg.y)?);
    }
    Ok((xs, ys))
}

pub fn run(ctx: &Context, out: &mut Output) -> CliResult<String> {
    let cfg: FitConfig = load(ctx.config)?;
    let path = ctx.resolve(&cfg.data);
    let (xs, raw) = read_columns(&path, &cfg)?;
    let ys = if cfg.normalize {
        min_max_normalize(&raw)?
    } else {
        raw
    };
    let fit = fit_sigmoid(&xs, &ys)?;
    out.write_json(
        "sigmoid_fit.json",
        &Report {
            data: cfg.data.display().to_string(),
            x: &cfg.x,
            y: &cfg.y,
            points: xs.len(),
            normalized: cfg.normalize,
            fit: &fit,
        },
    )?;
    out.write_svg("sigmoid_fit.svg", || {
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let curve = (0..=200)
            .map(|k| {
                let x = lo + (hi - lo) * k as f64 / 200.0;
                (x, fit.eval(x))
            })
            .collect();
        let data = xs.iter().copied().zip(ys.iter().copied()).collect();
        Plot::new(&format!("Logistic fit, R² = {:.4}", fit.r2), &cfg.x, &cfg.y)
            .points(Some("data"), PALETTE[0], data)
            .line(Some("fit"), PALETTE[1], curve)
            .render()
    })?;
    write_manifest(ctx, out, None, &fit)?;
    Ok(format!(
        "amplitude {:.5}, steepness {:.5}, midpoint {:.5}; R² {:.5} on {} points",
        fit.amplitude,
        fit.steepness,
        fit.midpoint,
        fit.r2,
        xs.len()
    ))
}
