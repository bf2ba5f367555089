//! Steady states: zero-acceleration spacing for a given speed, fundamental
//! diagrams and least-squares fits of the spacing–speed relation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::bounds::{ParamBounds, ParamId, ParamSpace};
use crate::estimation::optimize::{levenberg_marquardt, nelder_mead, NelderMeadOptions};
use crate::model::{sigmoid_idm_acceleration, KinematicContext, Model, ModelParams};

/// Spacing tolerance of the bisection (m).
pub const BISECTION_TOL: f64 = 1e-9;
/// Default acceleration tolerance deciding exact vs quasi equilibria (m/s²).
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-6;
/// Default vehicle length (m).
pub const DEFAULT_VEHICLE_LENGTH: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumBranch {
    IdmBranch,
    SigmoidBranch,
    /// No zero of the law exists at this speed; the point minimises `|a|`.
    Quasi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub speed: f64,
    pub spacing: f64,
    pub branch: EquilibriumBranch,
    /// `|a|` at `(speed, spacing)` with zero relative speed (m/s²).
    pub residual: f64,
}

fn check_speed(v_e: f64, p: &ModelParams) -> Result<()> {
    if !(v_e >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "equilibrium speed must be >= 0, got {v_e}"
        )));
    }
    if v_e >= p.desired_speed {
        return Err(Error::Divergent {
            v_e,
            v0: p.desired_speed,
        });
    }
    Ok(())
}

/// IDM steady-state spacing `(s0 + v T) / √(1 - (v/v0)^δ)`.
pub fn idm_equilibrium_spacing(v_e: f64, p: &ModelParams) -> Result<f64> {
    check_speed(v_e, p)?;
    let denom = 1.0 - p.speed_ratio_term(v_e);
    if denom <= 0.0 {
        return Err(Error::Divergent {
            v_e,
            v0: p.desired_speed,
        });
    }
    Ok((p.jam_distance + v_e * p.time_headway) / denom.sqrt())
}

/// Closed-form zero of the logistic branch,
/// `S* + d_c + (1/λ)·ln[(1 - (v/v0)^δ)^(-1) - 1]`.
///
/// Returns `None` when the formula falls outside its own validity region
/// (`S <= S*`) or is undefined (`v = 0`, `λ = 0`).
pub fn sigmoid_idm_closed_form(v_e: f64, p: &ModelParams) -> Option<f64> {
    let x = p.speed_ratio_term(v_e);
    if !(x > 0.0 && x < 1.0) || p.caution_factor <= 0.0 {
        return None;
    }
    let s_star = p.jam_distance + v_e * p.time_headway;
    let s = (1.0 / (1.0 - x) - 1.0).ln() / p.caution_factor + s_star + p.cautious_distance;
    (s > s_star).then_some(s)
}

/// Speed below which the Sigmoid-IDM has no exact steady state: the
/// solution of `(v/v0)^δ = 1 / (1 + exp(λ d_c))`.
pub fn sigmoid_idm_quasi_speed(p: &ModelParams) -> f64 {
    let threshold = 1.0 / (1.0 + (p.caution_factor * p.cautious_distance).exp());
    p.desired_speed * threshold.powf(1.0 / p.accel_exponent)
}

fn steady_accel(s: f64, v: f64, p: &ModelParams) -> f64 {
    let ctx = KinematicContext::new(s, v, v, p);
    sigmoid_idm_acceleration(&ctx, p).unwrap_or(f64::NEG_INFINITY)
}

/// Upper end of the bisection bracket, `10·(s0 + v0 T + d_c)`.
pub fn spacing_search_limit(p: &ModelParams) -> f64 {
    10.0 * (p.jam_distance + p.desired_speed * p.time_headway + p.cautious_distance)
}

/// Sigmoid-IDM steady state at speed `v_e`, found by bisection on the full
/// piecewise law over `(s0, S_max]`.
///
/// When the law has no zero at this speed the bracket collapses onto the
/// branch boundary `S*`; that point is returned as [`EquilibriumBranch::Quasi`]
/// with its residual.
pub fn sigmoid_idm_equilibrium(v_e: f64, p: &ModelParams, tol: f64) -> Result<EquilibriumPoint> {
    check_speed(v_e, p)?;
    let s_star = p.jam_distance + v_e * p.time_headway;
    let quasi = |s: f64| EquilibriumPoint {
        speed: v_e,
        spacing: s,
        branch: EquilibriumBranch::Quasi,
        residual: steady_accel(s, v_e, p).abs(),
    };

    // On (s0, S*] the IDM piece is strictly negative for v > 0, so any sign
    // change lies in [S*, S_max].
    let mut lo = s_star;
    let f_lo = steady_accel(lo, v_e, p);
    if f_lo >= 0.0 {
        // v = 0: the logistic piece is positive everywhere above s0.
        return Ok(if f_lo.abs() <= tol {
            EquilibriumPoint {
                speed: v_e,
                spacing: lo,
                branch: EquilibriumBranch::SigmoidBranch,
                residual: f_lo.abs(),
            }
        } else {
            quasi(lo)
        });
    }
    let mut hi = spacing_search_limit(p).max(2.0 * s_star);
    let mut expansions = 0;
    while steady_accel(hi, v_e, p) < 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::Divergent {
                v_e,
                v0: p.desired_speed,
            });
        }
    }
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if steady_accel(mid, v_e, p) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo == s_star {
        // The sign change is the jump at the branch boundary, not a root.
        return Ok(quasi(s_star));
    }
    let (f_lo, f_hi) = (steady_accel(lo, v_e, p), steady_accel(hi, v_e, p));
    let (s, r) = if f_hi.abs() <= f_lo.abs() {
        (hi, f_hi.abs())
    } else {
        (lo, f_lo.abs())
    };
    if r <= tol {
        Ok(EquilibriumPoint {
            speed: v_e,
            spacing: s,
            branch: EquilibriumBranch::SigmoidBranch,
            residual: r,
        })
    } else {
        Ok(quasi(s_star))
    }
}

/// Steady state of either law.
pub fn equilibrium(model: Model, v_e: f64, p: &ModelParams) -> Result<EquilibriumPoint> {
    match model {
        Model::Idm => {
            let s = idm_equilibrium_spacing(v_e, p)?;
            let ctx = KinematicContext::new(s, v_e, v_e, p);
            let residual = crate::model::idm_acceleration(&ctx, p)?.abs();
            Ok(EquilibriumPoint {
                speed: v_e,
                spacing: s,
                branch: EquilibriumBranch::IdmBranch,
                residual,
            })
        }
        Model::SigmoidIdm => sigmoid_idm_equilibrium(v_e, p, DEFAULT_RESIDUAL_TOL),
    }
}

/// Inverse of the steady-state relation: the speed whose equilibrium (or
/// quasi-equilibrium) spacing equals `spacing`. Zero at or below `s0`.
pub fn equilibrium_speed(model: Model, spacing: f64, p: &ModelParams) -> Result<f64> {
    p.validate(model)?;
    if !(spacing > 0.0) {
        return Err(Error::NonPositiveGap { gap: spacing });
    }
    if spacing <= p.jam_distance {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, p.desired_speed);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if equilibrium(model, mid, p)?.spacing < spacing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagramSegment {
    FreeFlowRay,
    Equilibrium,
    Quasi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagramPoint {
    /// veh/m
    pub density: f64,
    /// veh/s
    pub flow: f64,
    /// m/s
    pub speed: f64,
    /// Net spacing (m); infinite on the free-flow ray's zero-density end.
    pub spacing: f64,
    pub segment: DiagramSegment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalDiagram {
    pub model: Model,
    pub vehicle_length: f64,
    /// Sorted by strictly increasing density.
    pub points: Vec<DiagramPoint>,
    /// Bounds of the bistable density window, when measured.
    pub critical_densities: Option<(f64, f64)>,
}

impl FundamentalDiagram {
    /// The point of maximum flow.
    pub fn capacity(&self) -> Option<&DiagramPoint> {
        self.points.iter().max_by(|a, b| a.flow.total_cmp(&b.flow))
    }
}

/// Speeds from 0 towards `v0`: `n` uniform points on `[0, v0)` followed by
/// `v0·(1 - 10^-k)` for `k = 2..=9` so the free-flow end is resolved.
pub fn default_speed_grid(v0: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    let mut grid: Vec<f64> = (0..n).map(|i| v0 * i as f64 / n as f64).collect();
    grid.extend((2..=9).map(|k| v0 * (1.0 - 10f64.powi(-k))));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Number of points placed on the free-flow ray.
const RAY_POINTS: usize = 16;

/// Flow–density–speed relation of the homogeneous steady states.
///
/// Each speed of `speeds` gives `ρ = 1 / (s_e + ℓ)` and `Q = ρ v`; the
/// free-flow ray `Q = v0 ρ` is prepended for densities below the lowest
/// equilibrium density.
pub fn fundamental_diagram(
    p: &ModelParams,
    model: Model,
    vehicle_length: f64,
    speeds: &[f64],
) -> Result<FundamentalDiagram> {
    if !(vehicle_length >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "vehicle length must be >= 0, got {vehicle_length}"
        )));
    }
    let mut points = Vec::with_capacity(speeds.len() + RAY_POINTS);
    for &v in speeds {
        let eq = equilibrium(model, v, p)?;
        let density = 1.0 / (eq.spacing + vehicle_length);
        let segment = if eq.branch == EquilibriumBranch::Quasi {
            DiagramSegment::Quasi
        } else {
            DiagramSegment::Equilibrium
        };
        points.push(DiagramPoint {
            density,
            flow: density * v,
            speed: v,
            spacing: eq.spacing,
            segment,
        });
    }
    points.sort_by(|a, b| a.density.total_cmp(&b.density));
    points.dedup_by(|a, b| a.density == b.density);

    let rho_min = points
        .first()
        .map(|pt| pt.density)
        .unwrap_or(1.0 / (p.jam_distance + vehicle_length));
    let v0 = p.desired_speed;
    let ray = (0..RAY_POINTS).map(|k| {
        let density = rho_min * k as f64 / RAY_POINTS as f64;
        DiagramPoint {
            density,
            flow: v0 * density,
            speed: v0,
            spacing: if density > 0.0 {
                1.0 / density - vehicle_length
            } else {
                f64::INFINITY
            },
            segment: DiagramSegment::FreeFlowRay,
        }
    });
    let mut all: Vec<DiagramPoint> = ray.collect();
    all.extend(points);
    Ok(FundamentalDiagram {
        model,
        vehicle_length,
        points: all,
        critical_densities: None,
    })
}

/// Result of [`fit_steady_state`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateFit {
    pub params: ModelParams,
    /// Sum of squared spacing residuals (m²).
    pub sse: f64,
    pub converged: bool,
}

fn model_spacing(model: Model, v: f64, p: &ModelParams) -> Option<f64> {
    if p.validate(model).is_err() {
        return None;
    }
    equilibrium(model, v, p).ok().map(|e| e.spacing)
}

/// Least-squares fit of the steady-state spacing function to observed
/// `(mean speed, mean spacing)` pairs.
///
/// Only the parameters the steady state depends on are searched; `a` and `b`
/// stay pinned at their lower bounds (or the midpoint if free). The search is
/// a multi-start Nelder–Mead inside the box, polished by
/// Levenberg–Marquardt.
pub fn fit_steady_state(
    points: &[(f64, f64)],
    model: Model,
    bounds: &ParamBounds,
) -> Result<SteadyStateFit> {
    let space = ParamSpace::new(bounds, ParamId::equilibrium_set(model))?;
    if points.len() < space.dim().max(1) {
        return Err(Error::InvalidData(format!(
            "{} points cannot determine {} free parameters",
            points.len(),
            space.dim()
        )));
    }
    let sse_of = |x: &[f64]| -> f64 {
        let mut x = x.to_vec();
        let outside = !space.contains(&x);
        space.clamp(&mut x);
        let p = space.to_params(&x);
        let mut sse = 0.0;
        for &(v, s) in points {
            match model_spacing(model, v, &p) {
                Some(m) => sse += (m - s) * (m - s),
                None => return f64::MAX,
            }
        }
        // Pushes the simplex back into the box without a hard wall.
        if outside {
            sse * 2.0 + 1.0
        } else {
            sse
        }
    };

    let lo = space.lower();
    let width = space.widths();
    let mut starts = vec![space.midpoint()];
    for frac in [0.25, 0.75] {
        starts.push(lo.iter().zip(&width).map(|(l, w)| l + frac * w).collect());
    }
    let steps: Vec<f64> = width.iter().map(|w| 0.1 * w).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let m = nelder_mead(&sse_of, &start, &steps, NelderMeadOptions::default())?;
        if best.as_ref().is_none_or(|b| m.cost < b.1) {
            best = Some((m.x, m.cost));
        }
    }
    let (mut x, _) = best.expect("at least one start");
    space.clamp(&mut x);
    let residuals = |x: &[f64]| -> Option<Vec<f64>> {
        let p = space.to_params(x);
        points
            .iter()
            .map(|&(v, s)| model_spacing(model, v, &p).map(|m| m - s))
            .collect()
    };
    let x = levenberg_marquardt(&residuals, &x, &space.lower(), &space.upper(), 100);
    let sse = sse_of(&x);
    let params = space.to_params(&x);
    Ok(SteadyStateFit {
        params,
        sse,
        converged: sse.is_finite() && sse < f64::MAX,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::branch_jump_bound;

    fn sec4_params() -> ModelParams {
        ModelParams::idm(1.73, 2.0, 33.33, 1.0, 2.0).with_caution(1.0, 10.0)
    }

    #[test]
    fn idm_spacing_examples() {
        let p = sec4_params();
        assert_eq!(idm_equilibrium_spacing(0.0, &p).unwrap(), 2.0);
        let v = p.desired_speed / 2.0;
        let expected = (2.0 + v) / (15.0f64 / 16.0).sqrt();
        assert!((idm_equilibrium_spacing(v, &p).unwrap() - expected).abs() < 1e-12);
        assert!(matches!(
            idm_equilibrium_spacing(p.desired_speed, &p),
            Err(Error::Divergent { .. })
        ));
    }

    #[test]
    fn idm_spacing_blows_up_towards_v0() {
        let p = sec4_params();
        let mut last = 0.0;
        for k in 1..10 {
            let s = idm_equilibrium_spacing(p.desired_speed * (1.0 - 10f64.powi(-k)), &p).unwrap();
            assert!(s > last);
            last = s;
        }
        assert!(last > 1e4);
    }

    #[test]
    fn standstill_is_quasi_with_the_jump_residual() {
        let p = sec4_params();
        let eq = sigmoid_idm_equilibrium(0.0, &p, DEFAULT_RESIDUAL_TOL).unwrap();
        assert_eq!(eq.branch, EquilibriumBranch::Quasi);
        assert_eq!(eq.spacing, p.jam_distance);
        assert!((eq.residual - branch_jump_bound(&p)).abs() < 1e-15);
    }

    #[test]
    fn half_ratio_speed_gives_exact_offset() {
        let p = sec4_params();
        let v = p.desired_speed * 0.5f64.powf(0.25);
        let eq = sigmoid_idm_equilibrium(v, &p, DEFAULT_RESIDUAL_TOL).unwrap();
        assert_eq!(eq.branch, EquilibriumBranch::SigmoidBranch);
        let expected = p.jam_distance + v * p.time_headway + p.cautious_distance;
        assert!(
            (eq.spacing - expected).abs() < 1e-8,
            "{} vs {expected}",
            eq.spacing
        );
        assert!((sigmoid_idm_closed_form(v, &p).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn near_v0_growth_is_logarithmic() {
        let p = sec4_params();
        let v0 = p.desired_speed;
        let s_hi = sigmoid_idm_equilibrium(0.99 * v0, &p, DEFAULT_RESIDUAL_TOL)
            .unwrap()
            .spacing;
        let s_lo = sigmoid_idm_equilibrium(0.9 * v0, &p, DEFAULT_RESIDUAL_TOL)
            .unwrap()
            .spacing;
        let bracket = |r: f64| 1.0 / (1.0 - r.powi(4)) - 1.0;
        let bound =
            (bracket(0.99) / bracket(0.9)).ln() / p.caution_factor + 0.09 * v0 * p.time_headway;
        assert!(s_hi - s_lo <= bound + 1e-8);
        let idm_growth = idm_equilibrium_spacing(0.99 * v0, &p).unwrap()
            - idm_equilibrium_spacing(0.9 * v0, &p).unwrap();
        assert!(idm_growth > 10.0 * (s_hi - s_lo));
    }

    #[test]
    fn low_speed_points_are_quasi_below_threshold() {
        let p = sec4_params();
        let v_q = sigmoid_idm_quasi_speed(&p);
        let below = sigmoid_idm_equilibrium(0.5 * v_q, &p, DEFAULT_RESIDUAL_TOL).unwrap();
        assert_eq!(below.branch, EquilibriumBranch::Quasi);
        assert!(below.residual <= branch_jump_bound(&p));
        assert!((below.spacing - (p.jam_distance + 0.5 * v_q * p.time_headway)).abs() < 1e-12);
        let above = sigmoid_idm_equilibrium(1.5 * v_q, &p, DEFAULT_RESIDUAL_TOL).unwrap();
        assert_eq!(above.branch, EquilibriumBranch::SigmoidBranch);
    }

    #[test]
    fn bisection_matches_closed_form() {
        let p = sec4_params();
        for i in 1..100 {
            let v = p.desired_speed * i as f64 / 100.0;
            let eq = sigmoid_idm_equilibrium(v, &p, DEFAULT_RESIDUAL_TOL).unwrap();
            if let Some(cf) = sigmoid_idm_closed_form(v, &p) {
                assert_eq!(eq.branch, EquilibriumBranch::SigmoidBranch);
                assert!(
                    (eq.spacing - cf).abs() < 1e-6,
                    "v={v}: {} vs {cf}",
                    eq.spacing
                );
            } else {
                assert_eq!(eq.branch, EquilibriumBranch::Quasi, "v={v} {eq:?}");
            }
        }
    }

    #[test]
    fn diagram_jam_point_and_ray() {
        let p = sec4_params();
        let fd = fundamental_diagram(
            &p,
            Model::SigmoidIdm,
            5.0,
            &default_speed_grid(p.desired_speed, 50),
        )
        .unwrap();
        let last = fd.points.last().unwrap();
        assert!((last.density - 1.0 / 7.0).abs() < 1e-15);
        assert_eq!(last.flow, 0.0);
        for w in fd.points.windows(2) {
            assert!(w[1].density > w[0].density);
        }
        for pt in &fd.points {
            assert!((pt.flow - pt.density * pt.speed).abs() < 1e-15);
            if pt.segment == DiagramSegment::FreeFlowRay {
                assert_eq!(pt.flow, p.desired_speed * pt.density);
            }
        }
    }

    #[test]
    fn larger_cautious_distance_lowers_capacity() {
        let base = ModelParams::idm(1.73, 2.0, 30.0, 1.0, 2.0);
        let grid = default_speed_grid(30.0, 400);
        let cap = |dc: f64| {
            let p = base.with_caution(1.0, dc);
            let fd = fundamental_diagram(&p, Model::SigmoidIdm, 5.0, &grid).unwrap();
            let c = *fd.capacity().unwrap();
            (c.flow, c.density)
        };
        let (q10, k10) = cap(10.0);
        let (q20, k20) = cap(20.0);
        assert!(q20 < q10);
        assert!(k20 < k10);
    }

    #[test]
    fn fit_recovers_idm_steady_state() {
        let truth = ModelParams::idm(1.0, 1.0, 30.0, 1.4, 2.5);
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|i| {
                let v = 29.0 * i as f64 / 29.0;
                (v, idm_equilibrium_spacing(v, &truth).unwrap())
            })
            .collect();
        let b = ParamBounds {
            max_accel: (1.0, 1.0),
            comfort_decel: (1.0, 1.0),
            ..Default::default()
        };
        let fit = fit_steady_state(&pts, Model::Idm, &b).unwrap();
        assert!(fit.sse <= 1e-8, "sse {}", fit.sse);
        for (got, want) in [
            (fit.params.desired_speed, 30.0),
            (fit.params.time_headway, 1.4),
            (fit.params.jam_distance, 2.5),
        ] {
            assert!((got - want).abs() / want < 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn fit_single_point_recovers_jam_distance() {
        let truth = ModelParams::idm(1.0, 1.0, 30.0, 1.4, 2.5);
        let mut b = ParamBounds::point(&truth);
        b.jam_distance = (0.1, 6.0);
        let fit = fit_steady_state(&[(0.0, 2.5)], Model::Idm, &b).unwrap();
        assert!(
            (fit.params.jam_distance - 2.5).abs() < 1e-9,
            "{}",
            fit.params.jam_distance
        );
    }

    #[test]
    fn speed_inverts_spacing() {
        let p = sec4_params();
        for model in [Model::Idm, Model::SigmoidIdm] {
            for v in [0.5, 5.0, 20.0, 33.0] {
                let s = equilibrium(model, v, &p).unwrap().spacing;
                assert!((equilibrium_speed(model, s, &p).unwrap() - v).abs() < 1e-9);
            }
            assert_eq!(equilibrium_speed(model, 1.0, &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn fit_rejects_underdetermined_input() {
        let b = ParamBounds::default();
        assert!(fit_steady_state(&[(1.0, 5.0)], Model::Idm, &b).is_err());
    }
}
