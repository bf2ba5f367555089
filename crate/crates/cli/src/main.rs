//! `carfollow` command-line front end.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;
mod svg;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliResult;
use crate::output::{Format, Output};

#[derive(Parser)]
#[command(
    name = "carfollow",
    version,
    about = "Car-following simulation and analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args, Clone)]
pub struct GlobalArgs {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for randomised commands; overrides the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Which artefacts to write.
    #[arg(long, global = true, value_enum, default_value = "csv+svg")]
    pub format: Format,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Open-road platoon behind a prescribed leader.
    Simulate,
    /// Ring road, optionally with a density sweep.
    Ring,
    /// String-stability classification over a caution grid.
    StabilityMap,
    /// Steady-state flow, density and speed relations.
    FundamentalDiagram,
    /// Genetic-algorithm calibration against an observed pair.
    Calibrate,
    /// Error, comfort and fuel measures of observed vs simulated series.
    Metrics,
    /// Logistic curve fit of a data column.
    FitSigmoid,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ring => "ring",
            Command::StabilityMap => "stability-map",
            Command::FundamentalDiagram => "fundamental-diagram",
            Command::Calibrate => "calibrate",
            Command::Metrics => "metrics",
            Command::FitSigmoid => "fit-sigmoid",
        }
    }
}

fn run(cli: &Cli) -> CliResult<String> {
    let config = cli.global.config.as_deref().ok_or_else(|| {
        error::CliError::Config(format!("`{}` needs --config <path>", cli.command.name()))
    })?;
    let mut out = Output::create(&cli.global.out, cli.global.format)?;
    let ctx = commands::Context {
        command: cli.command.name(),
        config,
        seed: cli.global.seed,
    };
    match cli.command {
        Command::Simulate => commands::simulate::run(&ctx, &mut out),
        Command::Ring => commands::ring::run(&ctx, &mut out),
        Command::StabilityMap => commands::stability_map::run(&ctx, &mut out),
        Command::FundamentalDiagram => commands::fundamental_diagram::run(&ctx, &mut out),
        Command::Calibrate => commands::calibrate::run(&ctx, &mut out),
        Command::Metrics => commands::metrics::run(&ctx, &mut out),
        Command::FitSigmoid => commands::fit_sigmoid::run(&ctx, &mut out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => {
            if !cli.global.quiet {
                // A closed pipe on stdout is not a failure of the run.
                let _ = writeln!(std::io::stdout(), "{summary}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("carfollow {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
