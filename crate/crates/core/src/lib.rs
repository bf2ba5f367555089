//! Car-following simulation and analysis for the Intelligent Driver Model and
//! its sigmoid variant.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: the acceleration laws and the cautious-distance random walk.
//! * [`equilibrium`]: steady states and fundamental diagrams.
//! * [`stability`]: linear local and string stability.
//! * [`simulation`]: platoon and ring-road time stepping.
//! * [`estimation`]: error metrics, GA calibration and curve fitting.
//! * [`io`]: CSV and JSON interchange formats.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibrium;
pub mod error;
pub mod estimation;
pub mod io;
pub mod model;
pub mod simulation;
pub mod stability;

pub use error::{Error, Result};
pub use model::{Branch, KinematicContext, Model, ModelParams, RandomGapPolicy, RandomMode};
