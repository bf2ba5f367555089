use serde::{Deserialize, Serialize};

use carfollow::equilibrium::{
    default_speed_grid, fundamental_diagram, DiagramSegment, FundamentalDiagram,
    DEFAULT_VEHICLE_LENGTH,
};
use carfollow::simulation::Driver;

use super::{write_manifest, Context};
use crate::config::{load, Grid};
use crate::error::CliResult;
use crate::output::Output;
use crate::svg::{Plot, PALETTE};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagramConfig {
    drivers: Vec<Labelled>,
    #[serde(default = "default_length")]
    vehicle_length: f64,
    /// Equilibrium speeds; a refined grid up to each `v0` by default.
    #[serde(default)]
    speeds: Option<Grid>,
    #[serde(default = "default_points")]
    speed_points: usize,
}

fn default_length() -> f64 {
    DEFAULT_VEHICLE_LENGTH
}

fn default_points() -> usize {
    200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Labelled {
    #[serde(default)]
    label: Option<String>,
    driver: Driver,
}

#[derive(Serialize)]
struct Row<'a> {
    label: &'a str,
    model: &'static str,
    density: f64,
    flow: f64,
    speed: f64,
    spacing: Option<f64>,
    segment: &'static str,
}

#[derive(Serialize)]
struct Capacity {
    label: String,
    density: f64,
    flow: f64,
    speed: f64,
}

pub fn run(ctx: &Context, out: &mut Output) -> CliResult<String> {
    let cfg: DiagramConfig = load(ctx.config)?;
    if cfg.drivers.is_empty() {
        return Err(crate::error::CliError::Config(
            "`drivers` must list at least one driver".into(),
        ));
    }
    let fixed = match &cfg.speeds {
        Some(g) => Some(g.values("speeds")?),
        None => None,
    };
    let mut diagrams: Vec<(String, FundamentalDiagram)> = Vec::new();
    for d in &cfg.drivers {
        d.driver.params.validate(d.driver.model)?;
        let speeds = fixed
            .clone()
            .unwrap_or_else(|| default_speed_grid(d.driver.params.desired_speed, cfg.speed_points));
        let fd = fundamental_diagram(
            &d.driver.params,
            d.driver.model,
            cfg.vehicle_length,
            &speeds,
        )?;
        let label = d
            .label
            .clone()
            .unwrap_or_else(|| d.driver.model.name().into());
        diagrams.push((label, fd));
    }

    let rows: Vec<Row> = diagrams
        .iter()
        .flat_map(|(label, fd)| {
            fd.points.iter().map(move |p| Row {
                label,
                model: fd.model.name(),
                density: p.density,
                flow: p.flow,
                speed: p.speed,
                spacing: p.spacing.is_finite().then_some(p.spacing),
                segment: match p.segment {
                    DiagramSegment::FreeFlowRay => "free_flow_ray",
                    DiagramSegment::Equilibrium => "equilibrium",
                    DiagramSegment::Quasi => "quasi",
                },
            })
        })
        .collect();
    out.write_rows("fundamental_diagram.csv", &rows)?;

    type Pick = fn(&carfollow::equilibrium::DiagramPoint) -> (f64, f64);
    let figures: [(&str, &str, &str, &str, Pick); 3] = [
        (
            "flow_density.svg",
            "Flow against density",
            "density (veh/m)",
            "flow (veh/s)",
            |p| (p.density, p.flow),
        ),
        (
            "speed_density.svg",
            "Speed against density",
            "density (veh/m)",
            "speed (m/s)",
            |p| (p.density, p.speed),
        ),
        (
            "spacing_velocity.svg",
            "Equilibrium spacing against speed",
            "speed (m/s)",
            "spacing (m)",
            |p| (p.speed, p.spacing),
        ),
    ];
    for (name, title, xl, yl, pick) in figures {
        out.write_svg(name, || {
            let mut plot = Plot::new(title, xl, yl);
            for (k, (label, fd)) in diagrams.iter().enumerate() {
                let pts = fd
                    .points
                    .iter()
                    .filter(|p| {
                        !(name.starts_with("spacing") && p.segment == DiagramSegment::FreeFlowRay)
                    })
                    .map(pick)
                    .filter(|q| q.0.is_finite() && q.1.is_finite())
                    .collect();
                plot = plot.line(Some(label), PALETTE[k % PALETTE.len()], pts);
            }
            plot.render()
        })?;
    }

    let capacities: Vec<Capacity> = diagrams
        .iter()
        .filter_map(|(label, fd)| {
            fd.capacity().map(|c| Capacity {
                label: label.clone(),
                density: c.density,
                flow: c.flow,
                speed: c.speed,
            })
        })
        .collect();
    write_manifest(ctx, out, None, &capacities)?;
    Ok(capacities
        .iter()
        .map(|c| {
            format!(
                "{}: capacity {:.4} veh/s at {:.4} veh/m ({:.2} m/s)",
                c.label, c.flow, c.density, c.speed
            )
        })
        .collect::<Vec<_>>()
        .join("\n"))
}
