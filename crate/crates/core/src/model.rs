//! Acceleration laws of the IDM and the Sigmoid-IDM.
//!
//! Everything here is a pure function of its arguments. Time stepping lives in
//! [`crate::simulation`].
//!
//! Conventions:
//! * `gap` is the net bumper-to-bumper spacing `S` in metres.
//! * `dv` is the approach rate `v - v_lead`, positive when closing in.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which acceleration law drives a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Idm,
    SigmoidIdm,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Idm => "idm",
            Model::SigmoidIdm => "sigmoid_idm",
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "idm" => Ok(Model::Idm),
            "sigmoid_idm" | "sigmoid-idm" => Ok(Model::SigmoidIdm),
            other => Err(Error::InvalidParams(format!("unknown model `{other}`"))),
        }
    }
}

/// Full parameter vector of either law.
///
/// The IDM ignores `caution_factor` and `cautious_distance`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Maximum acceleration `a` (m/s²).
    pub max_accel: f64,
    /// Desired (comfortable) deceleration `b` (m/s²).
    pub comfort_decel: f64,
    /// Desired velocity `v0` (m/s).
    pub desired_speed: f64,
    /// Safe time headway `T` (s).
    pub time_headway: f64,
    /// Jam distance `s0` (m).
    pub jam_distance: f64,
    /// Acceleration exponent `δ`.
    #[serde(default = "default_exponent")]
    pub accel_exponent: f64,
    /// Cautious driving factor `λ` (1/m).
    #[serde(default)]
    pub caution_factor: f64,
    /// Cautious following distance `d_c` (m).
    #[serde(default)]
    pub cautious_distance: f64,
}

fn default_exponent() -> f64 {
    4.0
}

impl ModelParams {
    /// IDM parameters with `δ = 4` and the Sigmoid-IDM extension switched off.
    pub fn idm(
        max_accel: f64,
        comfort_decel: f64,
        desired_speed: f64,
        time_headway: f64,
        jam_distance: f64,
    ) -> Self {
        Self {
            max_accel,
            comfort_decel,
            desired_speed,
            time_headway,
            jam_distance,
            accel_exponent: 4.0,
            caution_factor: 0.0,
            cautious_distance: 0.0,
        }
    }

    pub fn with_caution(mut self, caution_factor: f64, cautious_distance: f64) -> Self {
        self.caution_factor = caution_factor;
        self.cautious_distance = cautious_distance;
        self
    }

    pub fn with_exponent(mut self, accel_exponent: f64) -> Self {
        self.accel_exponent = accel_exponent;
        self
    }

    /// Checks the physical invariants for the given law.
    pub fn validate(&self, model: Model) -> Result<()> {
        let positive = [
            ("max_accel", self.max_accel),
            ("comfort_decel", self.comfort_decel),
            ("desired_speed", self.desired_speed),
            ("time_headway", self.time_headway),
            ("jam_distance", self.jam_distance),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        if !(self.accel_exponent.is_finite() && self.accel_exponent >= 1.0) {
            return Err(Error::InvalidParams(format!(
                "accel_exponent must be >= 1, got {}",
                self.accel_exponent
            )));
        }
        if model == Model::SigmoidIdm {
            for (name, value) in [
                ("caution_factor", self.caution_factor),
                ("cautious_distance", self.cautious_distance),
            ] {
                if !(value.is_finite() && value >= 0.0) {
                    return Err(Error::InvalidParams(format!(
                        "{name} must be non-negative, got {value}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `2·√(a·b)`, the denominator of the dynamic desired-gap term.
    #[inline]
    pub fn braking_scale(&self) -> f64 {
        2.0 * (self.max_accel * self.comfort_decel).sqrt()
    }

    /// `(v / v0)^δ`, using integer powers when δ is integral.
    #[inline]
    pub fn speed_ratio_term(&self, v: f64) -> f64 {
        let r = v / self.desired_speed;
        let d = self.accel_exponent;
        if d == d.trunc() && d.abs() < 64.0 {
            r.powi(d as i32)
        } else {
            r.powf(d)
        }
    }
}

/// One vehicle's instantaneous stimulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicContext {
    pub gap: f64,
    pub v: f64,
    pub v_lead: f64,
    /// Approach rate `v - v_lead`.
    pub dv: f64,
    /// Desired spacing `S*` evaluated with the params the context was built for.
    pub s_star: f64,
}

impl KinematicContext {
    pub fn new(gap: f64, v: f64, v_lead: f64, params: &ModelParams) -> Self {
        Self {
            gap,
            v,
            v_lead,
            dv: v - v_lead,
            s_star: desired_spacing(v, v_lead, params),
        }
    }
}

/// Which piece of the Sigmoid-IDM law is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `s0 < S <= S*`: the IDM interaction term.
    Idm,
    /// Everything else: the logistic interaction term.
    Sigmoid,
}

/// Desired spacing `S* = s0 + vT + v(v - v_lead) / (2√(ab))`. Not clamped.
#[inline]
pub fn desired_spacing(v: f64, v_lead: f64, params: &ModelParams) -> f64 {
    params.jam_distance + v * params.time_headway + v * (v - v_lead) / params.braking_scale()
}

/// Free-road term `a[1 - (v/v0)^δ]`.
#[inline]
pub fn free_acceleration(v: f64, params: &ModelParams) -> f64 {
    params.max_accel * (1.0 - params.speed_ratio_term(v))
}

fn check_gap(gap: f64) -> Result<()> {
    if gap > 0.0 {
        Ok(())
    } else {
        Err(Error::NonPositiveGap { gap })
    }
}

/// IDM law `a[1 - (v/v0)^δ - (S*/S)²]`.
pub fn idm_acceleration(ctx: &KinematicContext, params: &ModelParams) -> Result<f64> {
    check_gap(ctx.gap)?;
    Ok(idm_branch_value(ctx, params))
}

#[inline]
fn idm_branch_value(ctx: &KinematicContext, params: &ModelParams) -> f64 {
    let ratio = ctx.s_star / ctx.gap;
    params.max_accel * (1.0 - params.speed_ratio_term(ctx.v) - ratio * ratio)
}

/// Logistic interaction term `[1 + exp(λ(S - S* - d_c))]^(-1)`, in (0, 1].
#[inline]
pub fn sigmoid_term(gap: f64, s_star: f64, params: &ModelParams) -> f64 {
    let z = params.caution_factor * (gap - s_star - params.cautious_distance);
    1.0 / (1.0 + z.exp())
}

#[inline]
fn sigmoid_branch_value(ctx: &KinematicContext, params: &ModelParams) -> f64 {
    params.max_accel
        * (1.0 - params.speed_ratio_term(ctx.v) - sigmoid_term(ctx.gap, ctx.s_star, params))
}

/// Branch rule of the Sigmoid-IDM: the IDM term applies on `s0 < S <= S*`.
#[inline]
pub fn active_branch(gap: f64, s_star: f64, params: &ModelParams) -> Branch {
    if gap <= s_star && gap > params.jam_distance {
        Branch::Idm
    } else {
        Branch::Sigmoid
    }
}

/// Sigmoid-IDM law.
///
/// On `s0 < S <= S*` this is bit-for-bit the IDM law; elsewhere the squared
/// gap ratio is replaced by the logistic term. At `v = 0` we have `S* = s0`,
/// so the IDM piece is empty and the standstill response is purely logistic.
pub fn sigmoid_idm_acceleration(ctx: &KinematicContext, params: &ModelParams) -> Result<f64> {
    check_gap(ctx.gap)?;
    Ok(match active_branch(ctx.gap, ctx.s_star, params) {
        Branch::Idm => idm_branch_value(ctx, params),
        Branch::Sigmoid => sigmoid_branch_value(ctx, params),
    })
}

/// Evaluates the law selected by `model`.
pub fn acceleration(model: Model, ctx: &KinematicContext, params: &ModelParams) -> Result<f64> {
    match model {
        Model::Idm => idm_acceleration(ctx, params),
        Model::SigmoidIdm => sigmoid_idm_acceleration(ctx, params),
    }
}

/// Evaluates one branch of the Sigmoid-IDM regardless of the branch rule.
///
/// Used to take one-sided limits at the branch boundary.
pub fn branch_acceleration(
    branch: Branch,
    ctx: &KinematicContext,
    params: &ModelParams,
) -> Result<f64> {
    check_gap(ctx.gap)?;
    Ok(match branch {
        Branch::Idm => idm_branch_value(ctx, params),
        Branch::Sigmoid => sigmoid_branch_value(ctx, params),
    })
}

/// Size of the acceleration jump across `S = S*`: `a / (1 + exp(λ d_c))`.
pub fn branch_jump_bound(params: &ModelParams) -> f64 {
    params.max_accel / (1.0 + (params.caution_factor * params.cautious_distance).exp())
}

/// How the random draw `r` of the cautious-distance walk is distributed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomMode {
    /// `r ∈ [-1, 0]`
    Negative,
    /// `r = 0`
    Zero,
    /// `r ∈ [0, 1]`
    Positive,
    /// `r ∈ [-1, 1]`
    Symmetric,
}

/// Stochastic update rule for the cautious following distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomGapPolicy {
    /// Change probability per step.
    pub probability: f64,
    /// Variation range `d` (m).
    pub range: f64,
    pub mode: RandomMode,
    /// Lower bound on `d_c` (m).
    #[serde(default)]
    pub floor: f64,
}

impl RandomGapPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::InvalidParams(format!(
                "gap policy probability must lie in [0, 1], got {}",
                self.probability
            )));
        }
        if !(self.range.is_finite() && self.range >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "gap policy range must be >= 0, got {}",
                self.range
            )));
        }
        if !self.floor.is_finite() {
            return Err(Error::InvalidParams(
                "gap policy floor must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Draws `r` for the configured mode.
    pub fn draw_r<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.mode {
            RandomMode::Negative => -rng.random::<f64>(),
            RandomMode::Zero => 0.0,
            RandomMode::Positive => rng.random::<f64>(),
            RandomMode::Symmetric => rng.random_range(-1.0..=1.0),
        }
    }

    /// Applies an already drawn step: `max(d_c + r·d, floor)`.
    pub fn apply(&self, cautious_distance: f64, r: f64) -> f64 {
        (cautious_distance + r * self.range).max(self.floor)
    }
}

/// One step of the cautious-distance random walk.
///
/// With probability `p` the distance moves by `r·d` (clamped at the floor),
/// otherwise it is returned unchanged. A Bernoulli draw is consumed on every
/// call so the stream position does not depend on the outcome.
pub fn update_cautious_distance<R: Rng + ?Sized>(
    cautious_distance: f64,
    policy: &RandomGapPolicy,
    rng: &mut R,
) -> f64 {
    let u: f64 = rng.random();
    if u < policy.probability {
        let r = policy.draw_r(rng);
        policy.apply(cautious_distance, r)
    } else {
        cautious_distance
    }
}
