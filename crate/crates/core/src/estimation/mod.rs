//! Calibration and goodness-of-fit tools.

pub mod bounds;
pub mod calibration;
pub mod fuel;
pub mod metrics;
pub mod optimize;
pub mod sigmoid_fit;

pub use bounds::{ParamBounds, ParamId, ParamSpace};
pub use calibration::{
    calibrate_ga, simulate_follower, CalibrationProblem, CalibrationResult, FollowerRun, GaSettings,
};
pub use fuel::{fuel_from_series, vt_micro_fuel, FuelCoefficients, FuelReport};
pub use metrics::{jerk, jerk_series, pearson, rmse, theils_u};
pub use sigmoid_fit::{fit_sigmoid, min_max_normalize, SigmoidFit};
