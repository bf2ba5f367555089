//! Box constraints on the parameter vector and the mapping between a flat
//! vector of free parameters and [`ModelParams`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelParams};

/// Identifies one field of [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamId {
    MaxAccel,
    ComfortDecel,
    DesiredSpeed,
    TimeHeadway,
    JamDistance,
    AccelExponent,
    CautionFactor,
    CautiousDistance,
}

impl ParamId {
    pub const ALL: [ParamId; 8] = [
        ParamId::MaxAccel,
        ParamId::ComfortDecel,
        ParamId::DesiredSpeed,
        ParamId::TimeHeadway,
        ParamId::JamDistance,
        ParamId::AccelExponent,
        ParamId::CautionFactor,
        ParamId::CautiousDistance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamId::MaxAccel => "max_accel",
            ParamId::ComfortDecel => "comfort_decel",
            ParamId::DesiredSpeed => "desired_speed",
            ParamId::TimeHeadway => "time_headway",
            ParamId::JamDistance => "jam_distance",
            ParamId::AccelExponent => "accel_exponent",
            ParamId::CautionFactor => "caution_factor",
            ParamId::CautiousDistance => "cautious_distance",
        }
    }

    pub fn get(self, p: &ModelParams) -> f64 {
        match self {
            ParamId::MaxAccel => p.max_accel,
            ParamId::ComfortDecel => p.comfort_decel,
            ParamId::DesiredSpeed => p.desired_speed,
            ParamId::TimeHeadway => p.time_headway,
            ParamId::JamDistance => p.jam_distance,
            ParamId::AccelExponent => p.accel_exponent,
            ParamId::CautionFactor => p.caution_factor,
            ParamId::CautiousDistance => p.cautious_distance,
        }
    }

    pub fn set(self, p: &mut ModelParams, value: f64) {
        match self {
            ParamId::MaxAccel => p.max_accel = value,
            ParamId::ComfortDecel => p.comfort_decel = value,
            ParamId::DesiredSpeed => p.desired_speed = value,
            ParamId::TimeHeadway => p.time_headway = value,
            ParamId::JamDistance => p.jam_distance = value,
            ParamId::AccelExponent => p.accel_exponent = value,
            ParamId::CautionFactor => p.caution_factor = value,
            ParamId::CautiousDistance => p.cautious_distance = value,
        }
    }

    /// Parameters the full acceleration law of `model` depends on.
    pub fn dynamic_set(model: Model) -> &'static [ParamId] {
        match model {
            Model::Idm => &ParamId::ALL[..6],
            Model::SigmoidIdm => &ParamId::ALL,
        }
    }

    /// Parameters the zero-acceleration spacing of `model` depends on.
    pub fn equilibrium_set(model: Model) -> &'static [ParamId] {
        const IDM: [ParamId; 4] = [
            ParamId::DesiredSpeed,
            ParamId::TimeHeadway,
            ParamId::JamDistance,
            ParamId::AccelExponent,
        ];
        const SIDM: [ParamId; 6] = [
            ParamId::DesiredSpeed,
            ParamId::TimeHeadway,
            ParamId::JamDistance,
            ParamId::AccelExponent,
            ParamId::CautionFactor,
            ParamId::CautiousDistance,
        ];
        match model {
            Model::Idm => &IDM,
            Model::SigmoidIdm => &SIDM,
        }
    }
}

/// Closed interval `[lo, hi]` per parameter. `lo == hi` pins a parameter.
///
/// Defaults are the calibration ranges used for both laws, with `δ` pinned
/// at 4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamBounds {
    pub max_accel: (f64, f64),
    pub comfort_decel: (f64, f64),
    pub desired_speed: (f64, f64),
    pub time_headway: (f64, f64),
    pub jam_distance: (f64, f64),
    pub accel_exponent: (f64, f64),
    pub caution_factor: (f64, f64),
    pub cautious_distance: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            max_accel: (0.1, 6.0),
            comfort_decel: (0.1, 6.0),
            desired_speed: (10.0, 40.0),
            time_headway: (0.1, 4.0),
            jam_distance: (0.1, 6.0),
            accel_exponent: (4.0, 4.0),
            caution_factor: (0.0, 2.0),
            cautious_distance: (0.1, 20.0),
        }
    }
}

impl ParamBounds {
    pub fn get(&self, id: ParamId) -> (f64, f64) {
        match id {
            ParamId::MaxAccel => self.max_accel,
            ParamId::ComfortDecel => self.comfort_decel,
            ParamId::DesiredSpeed => self.desired_speed,
            ParamId::TimeHeadway => self.time_headway,
            ParamId::JamDistance => self.jam_distance,
            ParamId::AccelExponent => self.accel_exponent,
            ParamId::CautionFactor => self.caution_factor,
            ParamId::CautiousDistance => self.cautious_distance,
        }
    }

    pub fn set(&mut self, id: ParamId, range: (f64, f64)) {
        match id {
            ParamId::MaxAccel => self.max_accel = range,
            ParamId::ComfortDecel => self.comfort_decel = range,
            ParamId::DesiredSpeed => self.desired_speed = range,
            ParamId::TimeHeadway => self.time_headway = range,
            ParamId::JamDistance => self.jam_distance = range,
            ParamId::AccelExponent => self.accel_exponent = range,
            ParamId::CautionFactor => self.caution_factor = range,
            ParamId::CautiousDistance => self.cautious_distance = range,
        }
    }

    /// Bounds pinned to a single parameter vector.
    pub fn point(p: &ModelParams) -> Self {
        let mut b = Self::default();
        for id in ParamId::ALL {
            let v = id.get(p);
            b.set(id, (v, v));
        }
        b
    }

    pub fn validate(&self) -> Result<()> {
        for id in ParamId::ALL {
            let (lo, hi) = self.get(id);
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParams(format!(
                    "bad bounds for {}: [{lo}, {hi}]",
                    id.name()
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &ModelParams, ids: &[ParamId]) -> bool {
        ids.iter().all(|&id| {
            let (lo, hi) = self.get(id);
            let v = id.get(p);
            v >= lo && v <= hi
        })
    }
}

/// The free coordinates of a bounded search over a subset of parameters.
#[derive(Debug, Clone)]
pub struct ParamSpace {
    base: ModelParams,
    free: Vec<(ParamId, f64, f64)>,
}

impl ParamSpace {
    /// Parameters in `relevant` with `lo < hi` become free coordinates; the
    /// others are pinned at their lower bound (midpoint for a degenerate
    /// interval is the same value).
    pub fn new(bounds: &ParamBounds, relevant: &[ParamId]) -> Result<Self> {
        bounds.validate()?;
        let mut base = ModelParams::idm(1.0, 1.0, 1.0, 1.0, 1.0);
        let mut free = Vec::new();
        for id in ParamId::ALL {
            let (lo, hi) = bounds.get(id);
            if relevant.contains(&id) && lo < hi {
                free.push((id, lo, hi));
                id.set(&mut base, 0.5 * (lo + hi));
            } else {
                id.set(&mut base, lo);
            }
        }
        Ok(Self { base, free })
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn free_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.free.iter().map(|f| f.0)
    }

    pub fn lower(&self) -> Vec<f64> {
        self.free.iter().map(|f| f.1).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.free.iter().map(|f| f.2).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.free.iter().map(|f| f.2 - f.1).collect()
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.free.iter().map(|f| 0.5 * (f.1 + f.2)).collect()
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (xi, &(_, lo, hi)) in x.iter_mut().zip(&self.free) {
            *xi = xi.clamp(lo, hi);
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.free)
            .all(|(&xi, &(_, lo, hi))| xi >= lo && xi <= hi)
    }

    pub fn to_params(&self, x: &[f64]) -> ModelParams {
        let mut p = self.base;
        for (&xi, &(id, _, _)) in x.iter().zip(&self.free) {
            id.set(&mut p, xi);
        }
        p
    }

    pub fn from_params(&self, p: &ModelParams) -> Vec<f64> {
        self.free.iter().map(|&(id, _, _)| id.get(p)).collect()
    }
}
