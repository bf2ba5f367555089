//! Linear stability of a car-following law around a steady state.
//!
//! Derivatives are taken with the relative speed oriented as
//! `Δv = v_leader - v_follower`, so a reasonable law has
//! `f_s > 0`, `f_v < 0` and `f_Δv > 0`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{equilibrium, EquilibriumBranch};
use crate::error::{Error, Result};
use crate::model::{active_branch, sigmoid_term, Branch, Model, ModelParams};

/// Partial derivatives of the acceleration law at zero relative speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Derivatives {
    /// ∂a/∂s (1/s²)
    pub f_s: f64,
    /// ∂a/∂v at fixed relative speed (1/s)
    pub f_v: f64,
    /// ∂a/∂Δv with Δv = leader − follower (1/s)
    pub f_dv: f64,
    pub branch: Branch,
    /// Set when the point sits exactly on `s = S*`; the logistic side is used.
    pub on_boundary: bool,
}

/// Analytic `(f_s, f_v, f_Δv)` at spacing `s` and speed `v` with `Δv = 0`.
pub fn partial_derivatives(p: &ModelParams, model: Model, v: f64, s: f64) -> Result<Derivatives> {
    if !(s > 0.0) {
        return Err(Error::NonPositiveGap { gap: s });
    }
    if !(v >= 0.0) || v >= p.desired_speed {
        return Err(Error::Divergent {
            v_e: v,
            v0: p.desired_speed,
        });
    }
    let a = p.max_accel;
    let s_star = p.jam_distance + v * p.time_headway;
    // ∂/∂v of a·(v/v0)^δ
    let free_slope = if v > 0.0 {
        a * p.accel_exponent * p.speed_ratio_term(v) / v
    } else if p.accel_exponent == 1.0 {
        a / p.desired_speed
    } else {
        0.0
    };
    // ∂S*/∂Δv with Δv = leader − follower
    let s_star_dv = -v / p.braking_scale();

    let (branch, on_boundary) = match model {
        Model::Idm => (Branch::Idm, false),
        Model::SigmoidIdm => {
            if s == s_star && s > p.jam_distance {
                (Branch::Sigmoid, true)
            } else {
                (active_branch(s, s_star, p), false)
            }
        }
    };

    let (f_s, f_v, f_dv) = match branch {
        Branch::Idm => {
            // a·(1 − (v/v0)^δ − (S*/s)²)
            let r = s_star / s;
            let f_s = 2.0 * a * r * r / s;
            let f_v = -free_slope - 2.0 * a * s_star * p.time_headway / (s * s);
            let f_dv = -2.0 * a * s_star * s_star_dv / (s * s);
            (f_s, f_v, f_dv)
        }
        Branch::Sigmoid => {
            // a·(1 − (v/v0)^δ − σ(λ(s − S* − d_c))),  σ(z) = 1/(1 + e^z)
            let sigma = sigmoid_term(s, s_star, p);
            let z = p.caution_factor * (s - s_star - p.cautious_distance);
            // σ(1 − σ) = e^z / (1 + e^z)², evaluated without cancellation
            let slope = if z > 0.0 {
                let e = (-z).exp();
                e / ((1.0 + e) * (1.0 + e))
            } else {
                sigma * (z.exp() * sigma)
            };
            let k = a * p.caution_factor * slope;
            let f_s = k;
            let f_v = -free_slope - k * p.time_headway;
            let f_dv = -k * s_star_dv;
            (f_s, f_v, f_dv)
        }
    };
    Ok(Derivatives {
        f_s,
        f_v,
        f_dv,
        branch,
        on_boundary,
    })
}

/// Roots of `γ² − (f_v − f_Δv)γ + f_s = 0` and whether both real parts are
/// negative.
pub fn local_stability(f_s: f64, f_v: f64, f_dv: f64) -> (Complex64, Complex64, bool) {
    let trace = f_v - f_dv;
    let disc = Complex64::new(trace * trace - 4.0 * f_s, 0.0).sqrt();
    let plus = (Complex64::new(trace, 0.0) + disc) * 0.5;
    let minus = (Complex64::new(trace, 0.0) - disc) * 0.5;
    let stable = plus.re < 0.0 && minus.re < 0.0;
    (plus, minus, stable)
}

/// `1/2 − f_Δv/f_v − f_s/f_v²` and whether it is positive.
pub fn string_criterion(f_s: f64, f_v: f64, f_dv: f64) -> Result<(f64, bool)> {
    if f_v == 0.0 || !f_v.is_finite() {
        return Err(Error::DegenerateEquilibrium);
    }
    let value = 0.5 - f_dv / f_v - f_s / (f_v * f_v);
    Ok((value, value > 0.0))
}

/// `|G(iω)|` of the spacing transfer between consecutive vehicles.
pub fn transfer_magnitude(f_s: f64, f_v: f64, f_dv: f64, omega: f64) -> f64 {
    let w2 = omega * omega;
    let num = f_s * f_s + w2 * f_dv * f_dv;
    let re = f_s - w2;
    let im = f_v - f_dv;
    let den = re * re + w2 * im * im;
    (num / den).sqrt()
}

/// `n` log-spaced frequencies on `[lo, hi]` rad/s.
pub fn log_frequencies(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Default sweep: 200 log-spaced points in `[1e-3, 10]` rad/s.
pub fn default_frequencies() -> Vec<f64> {
    log_frequencies(1e-3, 10.0, 200)
}

/// Largest `|G(iω)|` over the given frequencies.
pub fn max_transfer_magnitude(f_s: f64, f_v: f64, f_dv: f64, omegas: &[f64]) -> f64 {
    omegas
        .iter()
        .map(|&w| transfer_magnitude(f_s, f_v, f_dv, w))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub speed: f64,
    pub spacing: f64,
    pub derivatives: Derivatives,
    pub gamma_plus: (f64, f64),
    pub gamma_minus: (f64, f64),
    pub string_criterion: f64,
    pub locally_stable: bool,
    pub string_stable: bool,
}

/// Full linear analysis at an arbitrary `(v, s)` point with `Δv = 0`.
pub fn analyze(p: &ModelParams, model: Model, v: f64, s: f64) -> Result<StabilityReport> {
    let d = partial_derivatives(p, model, v, s)?;
    let (gp, gm, locally_stable) = local_stability(d.f_s, d.f_v, d.f_dv);
    let (criterion, string_stable) = string_criterion(d.f_s, d.f_v, d.f_dv)?;
    Ok(StabilityReport {
        speed: v,
        spacing: s,
        derivatives: d,
        gamma_plus: (gp.re, gp.im),
        gamma_minus: (gm.re, gm.im),
        string_criterion: criterion,
        locally_stable,
        string_stable,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellClass {
    Stable,
    StringUnstable,
    LocallyUnstable,
    /// The law has no exact steady state at the requested speed.
    NoEquilibrium,
}

impl CellClass {
    pub fn name(self) -> &'static str {
        match self {
            CellClass::Stable => "stable",
            CellClass::StringUnstable => "string_unstable",
            CellClass::LocallyUnstable => "locally_unstable",
            CellClass::NoEquilibrium => "no_equilibrium",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    pub caution_factor: f64,
    pub cautious_distance: f64,
    pub spacing: f64,
    pub equilibrium: EquilibriumBranch,
    pub class: CellClass,
    /// Linear criterion at the (possibly quasi) steady state; NaN if undefined.
    pub criterion: f64,
    pub on_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityMap {
    pub context: ModelParams,
    pub speed: f64,
    pub caution_factors: Vec<f64>,
    pub cautious_distances: Vec<f64>,
    /// Row-major: `cells[i * cautious_distances.len() + j]` holds
    /// `(caution_factors[i], cautious_distances[j])`.
    pub cells: Vec<MapCell>,
}

impl StabilityMap {
    pub fn cell(&self, i: usize, j: usize) -> &MapCell {
        &self.cells[i * self.cautious_distances.len() + j]
    }
}

/// Classifies one `(λ, d_c)` pair of the Sigmoid-IDM at steady speed `v_e`.
pub fn classify_cell(
    context: &ModelParams,
    v_e: f64,
    caution_factor: f64,
    cautious_distance: f64,
) -> Result<MapCell> {
    let p = context.with_caution(caution_factor, cautious_distance);
    let eq = equilibrium(Model::SigmoidIdm, v_e, &p)?;
    let report = analyze(&p, Model::SigmoidIdm, v_e, eq.spacing);
    let (criterion, on_boundary, class) = match report {
        Ok(r) => {
            let class = if eq.branch == EquilibriumBranch::Quasi {
                CellClass::NoEquilibrium
            } else if !r.locally_stable {
                CellClass::LocallyUnstable
            } else if !r.string_stable {
                CellClass::StringUnstable
            } else {
                CellClass::Stable
            };
            (r.string_criterion, r.derivatives.on_boundary, class)
        }
        Err(Error::DegenerateEquilibrium) => (f64::NAN, false, CellClass::NoEquilibrium),
        Err(e) => return Err(e),
    };
    Ok(MapCell {
        caution_factor,
        cautious_distance,
        spacing: eq.spacing,
        equilibrium: eq.branch,
        class,
        criterion,
        on_boundary,
    })
}

/// Stability classification over a `(λ, d_c)` grid, evaluated in parallel.
pub fn stability_map(
    context: &ModelParams,
    v_e: f64,
    caution_factors: &[f64],
    cautious_distances: &[f64],
) -> Result<StabilityMap> {
    if caution_factors.is_empty() || cautious_distances.is_empty() {
        return Err(Error::InvalidParams(
            "stability map grids must be non-empty".into(),
        ));
    }
    let pairs: Vec<(f64, f64)> = caution_factors
        .iter()
        .flat_map(|&l| cautious_distances.iter().map(move |&d| (l, d)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(l, d)| classify_cell(context, v_e, l, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityMap {
        context: *context,
        speed: v_e,
        caution_factors: caution_factors.to_vec(),
        cautious_distances: cautious_distances.to_vec(),
        cells,
    })
}
