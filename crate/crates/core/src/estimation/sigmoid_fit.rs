//! Least-squares fit of `a / (1 + exp(-λ (x - x0)))`.

use serde::{Deserialize, Serialize};

use super::optimize::{nelder_mead, NelderMeadOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidFit {
    pub amplitude: f64,
    pub steepness: f64,
    pub midpoint: f64,
    pub r2: f64,
    /// Adjusted for three coefficients.
    pub adj_r2: f64,
    /// `sqrt(SSE / (n - 3))`.
    pub rmse: f64,
}

impl SigmoidFit {
    pub fn eval(&self, x: f64) -> f64 {
        logistic(&[self.amplitude, self.steepness, self.midpoint], x)
    }
}

fn logistic(p: &[f64], x: f64) -> f64 {
    p[0] / (1.0 + (-p[1] * (x - p[2])).exp())
}

fn sse(p: &[f64], x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| (logistic(p, xi) - yi).powi(2))
        .sum()
}

/// Scales a series linearly onto `[0, 1]`.
pub fn min_max_normalize(series: &[f64]) -> Result<Vec<f64>> {
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidData(
            "cannot normalise an empty, constant or non-finite series".into(),
        ));
    }
    Ok(series.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// x at which the piecewise-linear interpolation of (x, y), sorted by x,
/// first reaches `level`; falls back to the sample closest in y.
fn crossing(sorted: &[(f64, f64)], level: f64) -> f64 {
    for w in sorted.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if (y0 - level) * (y1 - level) <= 0.0 && y0 != y1 {
            return x0 + (level - y0) / (y1 - y0) * (x1 - x0);
        }
    }
    sorted
        .iter()
        .min_by(|a, b| (a.1 - level).abs().total_cmp(&(b.1 - level).abs()))
        .map_or(0.0, |p| p.0)
}

/// Starting points derived from the data: amplitude from the maximum, the
/// midpoint from the half-max crossing and the steepness from the 25-75 %
/// rise width.
pub fn initial_guesses(x: &[f64], y: &[f64]) -> Vec<[f64; 3]> {
    let mut sorted: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let a = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x0 = crossing(&sorted, 0.5 * a);
    let width = crossing(&sorted, 0.75 * a) - crossing(&sorted, 0.25 * a);
    let span = sorted.last().unwrap().0 - sorted[0].0;
    let width = if width.abs() > 1e-12 {
        width
    } else {
        0.1 * span.max(1e-12)
    };
    let lambda = 2.0 * 3f64.ln() / width;
    vec![
        [a, lambda, x0],
        [a, 0.5 * lambda, x0],
        [a, 2.0 * lambda, x0],
        [1.25 * a, lambda, x0],
    ]
}

/// Levenberg–Marquardt refinement from a point already near the optimum.
fn refine(mut p: [f64; 3], x: &[f64], y: &[f64]) -> [f64; 3] {
    let mut cost = sse(&p, x, y);
    let mut mu = 1e-3;
    for _ in 0..200 {
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for (&xi, &yi) in x.iter().zip(y) {
            let e = (-p[1] * (xi - p[2])).exp();
            let d = 1.0 + e;
            let g = [
                1.0 / d,
                p[0] * e * (xi - p[2]) / (d * d),
                -p[0] * e * p[1] / (d * d),
            ];
            let r = p[0] / d - yi;
            for i in 0..3 {
                jtr[i] += g[i] * r;
                for j in 0..3 {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut m = jtj;
            for (i, row) in m.iter_mut().enumerate() {
                row[i] += mu * jtj[i][i].max(1e-300);
            }
            let Some(step) = solve3(m, jtr) else { break };
            let trial = [p[0] - step[0], p[1] - step[1], p[2] - step[2]];
            let c = sse(&trial, x, y);
            if c < cost {
                p = trial;
                cost = c;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    p
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for c in 0..3 {
        let piv = (c..3).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[piv][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, piv);
        b.swap(c, piv);
        let pivot = m[c];
        for r in c + 1..3 {
            let f = m[r][c] / pivot[c];
            for (x, p) in m[r][c..].iter_mut().zip(&pivot[c..]) {
                *x -= f * p;
            }
            b[r] -= f * b[c];
        }
    }
    let mut out = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|k| m[r][k] * out[k]).sum();
        out[r] = (b[r] - s) / m[r][r];
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Multi-start Nelder–Mead followed by a Levenberg–Marquardt polish.
///
/// The returned residual is never larger than that of any starting point.
pub fn fit_sigmoid(x: &[f64], y: &[f64]) -> Result<SigmoidFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 4 {
        return Err(Error::InvalidData(format!(
            "sigmoid fit needs at least 4 points, got {n}"
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("sigmoid fit data must be finite".into()));
    }
    let my = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::InvalidData(
            "sigmoid fit needs non-constant y".into(),
        ));
    }
    let f = |p: &[f64]| sse(p, x, y);
    let mut best: Option<([f64; 3], f64)> = None;
    for init in initial_guesses(x, y) {
        let steps: Vec<f64> = init.iter().map(|v| 0.1 * v.abs().max(1e-3)).collect();
        let m = nelder_mead(&f, &init, &steps, NelderMeadOptions::default())?;
        let p = refine([m.x[0], m.x[1], m.x[2]], x, y);
        let c = f(&p);
        if best.is_none_or(|(_, bc)| c < bc) {
            best = Some((p, c));
        }
    }
    let (p, cost) = best.expect("at least one start");
    let r2 = 1.0 - cost / sst;
    let dof = (n - 3) as f64;
    Ok(SigmoidFit {
        amplitude: p[0],
        steepness: p[1],
        midpoint: p[2],
        r2,
        adj_r2: 1.0 - (1.0 - r2) * (n as f64 - 1.0) / dof,
        rmse: (cost / dof).sqrt(),
    })
}
