use serde::{Deserialize, Serialize};

use carfollow::equilibrium::EquilibriumBranch;
use carfollow::stability::{classify_cell, stability_map, CellClass, MapCell};
use carfollow::ModelParams;

use super::{write_manifest, Context};
use crate::config::{load, Grid};
use crate::error::CliResult;
use crate::output::Output;
use crate::svg::Heatmap;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapConfig {
    /// Base parameters; the caution fields are replaced cell by cell.
    context: ModelParams,
    /// Steady speed (m/s).
    speed: f64,
    caution_factors: Grid,
    cautious_distances: Grid,
    #[serde(default)]
    cases: Vec<Case>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Case {
    label: String,
    caution_factor: f64,
    cautious_distance: f64,
}

#[derive(Serialize)]
struct Row<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
    caution_factor: f64,
    cautious_distance: f64,
    spacing: f64,
    equilibrium: &'static str,
    class: &'static str,
    criterion: Option<f64>,
    on_boundary: bool,
}

impl<'a> Row<'a> {
    fn new(label: Option<&'a str>, c: &MapCell) -> Self {
        Self {
            label,
            caution_factor: c.caution_factor,
            cautious_distance: c.cautious_distance,
            spacing: c.spacing,
            equilibrium: match c.equilibrium {
                EquilibriumBranch::IdmBranch => "idm_branch",
                EquilibriumBranch::SigmoidBranch => "sigmoid_branch",
                EquilibriumBranch::Quasi => "quasi",
            },
            class: c.class.name(),
            criterion: c.criterion.is_finite().then_some(c.criterion),
            on_boundary: c.on_boundary,
        }
    }
}

const CLASSES: [CellClass; 4] = [
    CellClass::Stable,
    CellClass::StringUnstable,
    CellClass::LocallyUnstable,
    CellClass::NoEquilibrium,
];

#[derive(Serialize)]
struct Summary {
    speed: f64,
    cells: usize,
    stable: usize,
    string_unstable: usize,
    locally_unstable: usize,
    no_equilibrium: usize,
}

pub fn run(ctx: &Context, out: &mut Output) -> CliResult<String> {
    let cfg: MapConfig = load(ctx.config)?;
    let lambdas = cfg.caution_factors.values("caution_factors")?;
    let dcs = cfg.cautious_distances.values("cautious_distances")?;
    let map = stability_map(&cfg.context, cfg.speed, &lambdas, &dcs)?;
    let cases = cfg
        .cases
        .iter()
        .map(|c| {
            classify_cell(
                &cfg.context,
                cfg.speed,
                c.caution_factor,
                c.cautious_distance,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let rows: Vec<Row> = map.cells.iter().map(|c| Row::new(None, c)).collect();
    out.write_rows("stability_map.csv", &rows)?;
    if !cases.is_empty() {
        let rows: Vec<Row> = cfg
            .cases
            .iter()
            .zip(&cases)
            .map(|(c, cell)| Row::new(Some(&c.label), cell))
            .collect();
        out.write_rows("cases.csv", &rows)?;
    }
    out.write_svg("stability_map.svg", || {
        let cells = (0..lambdas.len())
            .map(|i| {
                (0..dcs.len())
                    .map(|j| CLASSES.iter().position(|&k| k == map.cell(i, j).class))
                    .collect()
            })
            .collect();
        Heatmap {
            title: &format!("String stability at v = {} m/s", cfg.speed),
            x_label: "cautious distance d_c (m)",
            y_label: "caution factor λ (1/m)",
            xs: &dcs,
            ys: &lambdas,
            cells,
            legend: vec![
                ("stable", "#4daf4a"),
                ("string unstable", "#ff7f00"),
                ("locally unstable", "#e41a1c"),
                ("no equilibrium", "#bdbdbd"),
            ],
            markers: cfg
                .cases
                .iter()
                .map(|c| (c.cautious_distance, c.caution_factor, c.label.clone()))
                .collect(),
        }
        .render()
    })?;

    let count = |k: CellClass| map.cells.iter().filter(|c| c.class == k).count();
    let summary = Summary {
        speed: cfg.speed,
        cells: map.cells.len(),
        stable: count(CellClass::Stable),
        string_unstable: count(CellClass::StringUnstable),
        locally_unstable: count(CellClass::LocallyUnstable),
        no_equilibrium: count(CellClass::NoEquilibrium),
    };
    write_manifest(ctx, out, None, &summary)?;
    let mut msg = format!(
        "{} cells: {} stable, {} string unstable, {} locally unstable, {} without equilibrium",
        summary.cells,
        summary.stable,
        summary.string_unstable,
        summary.locally_unstable,
        summary.no_equilibrium
    );
    for (c, cell) in cfg.cases.iter().zip(&cases) {
        msg.push_str(&format!(
            "\n  {}: {} (criterion {:.4})",
            c.label,
            cell.class.name(),
            cell.criterion
        ));
    }
    Ok(msg)
}
