//! JSON configuration loading and shared schema pieces.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use carfollow::simulation::Driver;

use crate::error::{CliError, CliResult};

/// Parses a JSON file, reporting the offending field path and line on error.
pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse(&text).map_err(|m| CliError::Config(format!("{}: {m}", path.display())))
}

pub fn parse<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        let at = format!("line {} column {}", inner.line(), inner.column());
        if field.is_empty() || field == "." {
            format!("{at}: {inner}")
        } else {
            format!("{at}, field `{field}`: {inner}")
        }
    })
}

/// Resolves a path given in a config file against the file's directory.
pub fn resolve(config: &Path, relative: &Path) -> PathBuf {
    if relative.is_absolute() {
        relative.to_path_buf()
    } else {
        config
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(relative)
    }
}

/// Either one driver repeated `count` times or an explicit list.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fleet {
    #[serde(default)]
    pub driver: Option<Driver>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub drivers: Option<Vec<Driver>>,
}

impl Fleet {
    pub fn expand(&self, what: &str) -> CliResult<Vec<Driver>> {
        match (&self.driver, self.count, &self.drivers) {
            (Some(d), Some(n), None) => Ok(vec![*d; n]),
            (None, None, Some(list)) if !list.is_empty() => Ok(list.clone()),
            _ => Err(CliError::Config(format!(
                "`{what}` needs either `driver` with `count` or a non-empty `drivers` list"
            ))),
        }
    }
}

/// A scalar applied to every vehicle, or one value per vehicle.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PerVehicle {
    All(f64),
    Each(Vec<f64>),
}

impl PerVehicle {
    pub fn expand(&self, n: usize, what: &str) -> CliResult<Vec<f64>> {
        match self {
            PerVehicle::All(v) => Ok(vec![*v; n]),
            PerVehicle::Each(list) if list.len() == n => Ok(list.clone()),
            PerVehicle::Each(list) => Err(CliError::Config(format!(
                "`{what}` lists {} values for {n} vehicles",
                list.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapKeyword {
    /// Each follower's steady-state spacing at its initial speed.
    Equilibrium,
}

/// Initial gaps: explicit values or the steady-state spacing.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GapSpec {
    Keyword(GapKeyword),
    Values(PerVehicle),
}

/// Evenly spaced values, or an explicit list.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Range { start: f64, stop: f64, steps: usize },
    Values(Vec<f64>),
}

impl Grid {
    pub fn values(&self, what: &str) -> CliResult<Vec<f64>> {
        let v = match self {
            Grid::Values(v) => v.clone(),
            Grid::Range { start, stop, steps } => match steps {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n)
                    .map(|k| start + (stop - start) * k as f64 / (n - 1) as f64)
                    .collect(),
            },
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Config(format!(
                "`{what}` must hold at least one finite value"
            )));
        }
        Ok(v)
    }
}
