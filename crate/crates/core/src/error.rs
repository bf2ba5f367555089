use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive gap {gap} m (collision state)")]
    NonPositiveGap { gap: f64 },

    #[error("equilibrium speed {v_e} m/s is not below the desired speed {v0} m/s")]
    Divergent { v_e: f64, v0: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("degenerate equilibrium: ∂a/∂v vanishes")]
    DegenerateEquilibrium,

    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("non-finite state at step {step}, vehicle {vehicle}")]
    NonFinite { step: usize, vehicle: usize },

    #[error("every individual of the initial population is infeasible")]
    AllInfeasible,

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
