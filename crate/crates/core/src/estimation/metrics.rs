//! Goodness-of-fit and comfort metrics.

use crate::error::{Error, Result};
use crate::simulation::Trajectory;

fn check_pair(a: &[f64], b: &[f64], min_len: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < min_len {
        return Err(Error::InvalidData(format!(
            "need at least {min_len} samples, got {}",
            a.len()
        )));
    }
    Ok(())
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Root-mean-square difference of two equally long series.
pub fn rmse(observed: &[f64], simulated: &[f64]) -> Result<f64> {
    check_pair(observed, simulated, 1)?;
    let sse: f64 = observed
        .iter()
        .zip(simulated)
        .map(|(o, s)| (o - s) * (o - s))
        .sum();
    Ok((sse / observed.len() as f64).sqrt())
}

/// Theil's inequality coefficient `RMSE / (RMS(obs) + RMS(sim))`, in `[0, 1]`.
pub fn theils_u(observed: &[f64], simulated: &[f64]) -> Result<f64> {
    let num = rmse(observed, simulated)?;
    let den = rms(observed) + rms(simulated);
    if den == 0.0 {
        return Err(Error::UndefinedMetric("Theil's U of two all-zero series"));
    }
    Ok(num / den)
}

/// Product-moment correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y, 2)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("correlation of a constant series"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Derivative of a uniformly sampled acceleration series: central
/// differences inside, one-sided at the ends.
pub fn jerk(accel: &[f64], dt: f64) -> Vec<f64> {
    let n = accel.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|k| match k {
            0 => (accel[1] - accel[0]) / dt,
            k if k == n - 1 => (accel[k] - accel[k - 1]) / dt,
            k => (accel[k + 1] - accel[k - 1]) / (2.0 * dt),
        })
        .collect()
}

pub fn jerk_series(traj: &Trajectory, vehicle: usize) -> Result<Vec<f64>> {
    if vehicle >= traj.n_vehicles() {
        return Err(Error::InvalidData(format!("no vehicle {vehicle}")));
    }
    Ok(jerk(&traj.accelerations(vehicle), traj.dt))
}
