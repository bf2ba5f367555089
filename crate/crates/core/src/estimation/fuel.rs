//! VT-Micro style fuel model `exp(Σ k_ij v^i a^j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulation::Trajectory;

/// Coefficient matrices indexed `[i][j]` for `v^i a^j`. `k_neg`, when
/// present, is used for negative acceleration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuelCoefficients {
    pub k_pos: [[f64; 4]; 4],
    #[serde(default)]
    pub k_neg: Option<[[f64; 4]; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuelReport {
    /// Per-sample rate.
    pub moe: Vec<f64>,
    /// `Σ moe · dt`.
    pub total: f64,
}

impl FuelCoefficients {
    pub fn validate(&self) -> Result<()> {
        let finite = |k: &[[f64; 4]; 4]| k.iter().flatten().all(|x| x.is_finite());
        if !finite(&self.k_pos) || !self.k_neg.as_ref().is_none_or(finite) {
            return Err(Error::InvalidParams(
                "fuel coefficients must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn rate(&self, v: f64, a: f64) -> f64 {
        let k = match (&self.k_neg, a < 0.0) {
            (Some(neg), true) => neg,
            _ => &self.k_pos,
        };
        let mut exponent = 0.0;
        let mut vi = 1.0;
        for row in k {
            let mut aj = 1.0;
            for kij in row {
                exponent += kij * vi * aj;
                aj *= a;
            }
            vi *= v;
        }
        exponent.exp()
    }
}

/// Fuel rate and total of one vehicle's speed and acceleration series.
pub fn fuel_from_series(
    speeds: &[f64],
    accelerations: &[f64],
    dt: f64,
    coeffs: &FuelCoefficients,
) -> Result<FuelReport> {
    coeffs.validate()?;
    if speeds.len() != accelerations.len() {
        return Err(Error::LengthMismatch(speeds.len(), accelerations.len()));
    }
    if let Some(v) = speeds.iter().find(|&&v| !(v >= 0.0)) {
        return Err(Error::InvalidData(format!(
            "fuel model needs v >= 0, got {v}"
        )));
    }
    let moe: Vec<f64> = speeds
        .iter()
        .zip(accelerations)
        .map(|(&v, &a)| coeffs.rate(v, a))
        .collect();
    let total = moe.iter().sum::<f64>() * dt;
    Ok(FuelReport { moe, total })
}

pub fn vt_micro_fuel(
    traj: &Trajectory,
    vehicle: usize,
    coeffs: &FuelCoefficients,
) -> Result<FuelReport> {
    if vehicle >= traj.n_vehicles() {
        return Err(Error::InvalidData(format!("no vehicle {vehicle}")));
    }
    fuel_from_series(
        &traj.velocities(vehicle),
        &traj.accelerations(vehicle),
        traj.dt,
        coeffs,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trivial_coefficients() {
        let mut c = FuelCoefficients {
            k_pos: [[0.0; 4]; 4],
            k_neg: None,
        };
        assert_eq!(c.rate(12.0, -1.0), 1.0);
        c.k_pos[0][0] = 2f64.ln();
        assert_relative_eq!(c.rate(7.0, 0.5), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn negative_matrix_selected_by_sign() {
        let mut neg = [[0.0; 4]; 4];
        neg[1][1] = 1.0;
        let c = FuelCoefficients {
            k_pos: [[0.0; 4]; 4],
            k_neg: Some(neg),
        };
        assert_eq!(c.rate(2.0, 1.0), 1.0);
        assert_relative_eq!(c.rate(2.0, -1.0), (-2f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        let mut k = [[0.0; 4]; 4];
        k[3][3] = f64::NAN;
        assert!(FuelCoefficients {
            k_pos: k,
            k_neg: None
        }
        .validate()
        .is_err());
    }
}
