//! Thin wrapper around argmin's Nelder–Mead with restarts.

use argmin::core::{CostFunction, Error as ArgminError, Executor, State};
use argmin::solver::neldermead::NelderMead;

use crate::error::{Error, Result};

struct Objective<'a, F> {
    f: &'a F,
}

impl<F: Fn(&[f64]) -> f64> CostFunction for Objective<'_, F> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> Result<f64, ArgminError> {
        let c = (self.f)(x);
        Ok(if c.is_finite() { c } else { f64::MAX })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iters: u64,
    /// Stop when the standard deviation of simplex costs falls below this.
    pub sd_tolerance: f64,
    /// Maximum number of restarts from the current best point.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_iters: 4000,
            sd_tolerance: 1e-18,
            restarts: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub cost: f64,
    pub iterations: u64,
}

fn simplex(start: &[f64], steps: &[f64]) -> Vec<Vec<f64>> {
    let mut s = vec![start.to_vec()];
    for i in 0..start.len() {
        let mut v = start.to_vec();
        v[i] += if steps[i] != 0.0 { steps[i] } else { 1e-3 };
        s.push(v);
    }
    s
}

/// Minimises `f` from `start`, restarting with a shrinking simplex until a
/// restart no longer improves the cost.
///
/// The returned cost never exceeds `f(start)`.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    start: &[f64],
    steps: &[f64],
    opts: NelderMeadOptions,
) -> Result<Minimum> {
    let mut best_x = start.to_vec();
    let mut best_cost = f(start);
    if !best_cost.is_finite() {
        best_cost = f64::MAX;
    }
    if start.is_empty() {
        return Ok(Minimum {
            x: best_x,
            cost: best_cost,
            iterations: 0,
        });
    }
    let mut step: Vec<f64> = steps.to_vec();
    let mut iterations = 0;
    for _ in 0..=opts.restarts {
        let solver = NelderMead::new(simplex(&best_x, &step))
            .with_sd_tolerance(opts.sd_tolerance)
            .map_err(|e| Error::Optimizer(e.to_string()))?;
        let res = Executor::new(Objective { f }, solver)
            .configure(|s| s.max_iters(opts.max_iters))
            .run()
            .map_err(|e| Error::Optimizer(e.to_string()))?;
        let state = res.state();
        iterations += state.get_iter();
        let cost = state.get_best_cost();
        let improved = cost < best_cost;
        let gain = best_cost - cost;
        if improved {
            best_cost = cost;
            best_x = state.get_best_param().cloned().unwrap_or(best_x);
        }
        if !improved || gain <= 1e-16 * best_cost.abs().max(1e-300) {
            break;
        }
        for s in &mut step {
            *s *= 0.5;
        }
    }
    Ok(Minimum {
        x: best_x,
        cost: best_cost,
        iterations,
    })
}

fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[piv][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, piv);
        b.swap(c, piv);
        let pivot = m[c].clone();
        for r in c + 1..n {
            let f = m[r][c] / pivot[c];
            for (x, p) in m[r][c..].iter_mut().zip(&pivot[c..]) {
                *x -= f * p;
            }
            b[r] -= f * b[c];
        }
    }
    let mut out = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * out[k]).sum();
        out[r] = (b[r] - s) / m[r][r];
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

/// Box-projected Levenberg–Marquardt on a residual vector with a
/// central-difference Jacobian. Used to polish a Nelder–Mead result; the
/// returned point is never worse than `start`.
pub fn levenberg_marquardt<R>(
    residuals: &R,
    start: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_iters: usize,
) -> Vec<f64>
where
    R: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let cost = |x: &[f64]| residuals(x).map_or(f64::INFINITY, |r| r.iter().map(|v| v * v).sum());
    let n = start.len();
    let mut x = start.to_vec();
    let mut c = cost(&x);
    if n == 0 || !c.is_finite() {
        return x;
    }
    let mut mu = 1e-3;
    for _ in 0..max_iters {
        let Some(r) = residuals(&x) else { break };
        let mut jac = vec![vec![0.0; n]; r.len()];
        let mut ok = true;
        for k in 0..n {
            let h = 1e-7 * x[k].abs().max(1.0);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] = (x[k] + h).min(upper[k]);
            xm[k] = (x[k] - h).max(lower[k]);
            let (Some(rp), Some(rm)) = (residuals(&xp), residuals(&xm)) else {
                ok = false;
                break;
            };
            let span = xp[k] - xm[k];
            if span <= 0.0 {
                continue;
            }
            for (row, (a, b)) in jac.iter_mut().zip(rp.iter().zip(&rm)) {
                row[k] = (a - b) / span;
            }
        }
        if !ok {
            break;
        }
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for (row, ri) in jac.iter().zip(&r) {
            for i in 0..n {
                jtr[i] += row[i] * ri;
                for j in 0..n {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut m = jtj.clone();
            for (i, row) in m.iter_mut().enumerate() {
                row[i] += mu * jtj[i][i].max(1e-12);
            }
            let Some(step) = solve(m, jtr.clone()) else {
                break;
            };
            let trial: Vec<f64> = (0..n)
                .map(|i| (x[i] - step[i]).clamp(lower[i], upper[i]))
                .collect();
            let tc = cost(&trial);
            if tc < c {
                x = trial;
                c = tc;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                break;
            }
            mu *= 10.0;
        }
        if !improved || c == 0.0 {
            break;
        }
    }
    x
}
