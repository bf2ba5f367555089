//! Genetic-algorithm calibration of one follower against an observed pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::{ParamBounds, ParamId, ParamSpace};
use super::metrics::{rmse, theils_u};
use crate::error::{Error, Result};
use crate::model::{Model, ModelParams};
use crate::simulation::{
    simulate_platoon, CollisionPolicy, Driver, Integrator, LeaderProfile, PlatoonConfig,
};

/// Minimum observed duration.
pub const MIN_DURATION: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaSettings {
    pub population: usize,
    pub generations: usize,
    pub tournament: usize,
    pub crossover_rate: f64,
    /// BLX-α extension on either side of the parents' interval.
    pub blend_alpha: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Mutation standard deviation as a fraction of the gene's range.
    pub mutation_scale: f64,
    pub elitism: usize,
}

impl Default for GaSettings {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 500,
            tournament: 3,
            crossover_rate: 0.9,
            blend_alpha: 0.5,
            mutation_rate: 0.1,
            mutation_scale: 0.05,
            elitism: 2,
        }
    }
}

impl GaSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if self.population < 2 {
            return bad("population must be at least 2");
        }
        if self.tournament == 0 {
            return bad("tournament size must be at least 1");
        }
        if self.elitism > self.population {
            return bad("elitism exceeds the population");
        }
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !unit(self.crossover_rate) || !unit(self.mutation_rate) {
            return bad("crossover and mutation rates must lie in [0, 1]");
        }
        if !(self.blend_alpha >= 0.0) || !(self.mutation_scale >= 0.0) {
            return bad("blend alpha and mutation scale must be >= 0");
        }
        Ok(())
    }
}

/// Observed leader/follower pair sampled at a fixed step, plus search setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationProblem {
    pub model: Model,
    pub dt: f64,
    pub leader_position: Vec<f64>,
    pub leader_speed: Vec<f64>,
    pub follower_position: Vec<f64>,
    pub follower_speed: Vec<f64>,
    #[serde(default = "default_length")]
    pub vehicle_length: f64,
    #[serde(default)]
    pub bounds: ParamBounds,
    #[serde(default)]
    pub ga: GaSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub clamp_velocity: bool,
}

fn default_length() -> f64 {
    crate::equilibrium::DEFAULT_VEHICLE_LENGTH
}

fn default_true() -> bool {
    true
}

impl CalibrationProblem {
    pub fn n_samples(&self) -> usize {
        self.leader_position.len()
    }

    pub fn observed_gaps(&self) -> Vec<f64> {
        self.leader_position
            .iter()
            .zip(&self.follower_position)
            .map(|(l, f)| l - f - self.vehicle_length)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_samples();
        for len in [
            self.leader_speed.len(),
            self.follower_position.len(),
            self.follower_speed.len(),
        ] {
            if len != n {
                return Err(Error::LengthMismatch(n, len));
            }
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParams(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if n < 2 || (n - 1) as f64 * self.dt < MIN_DURATION - 1e-9 {
            return Err(Error::InvalidData(format!(
                "calibration needs at least {MIN_DURATION} s of data"
            )));
        }
        let series = [
            &self.leader_position,
            &self.leader_speed,
            &self.follower_position,
            &self.follower_speed,
        ];
        if series.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidData(
                "trajectory contains non-finite values".into(),
            ));
        }
        if self.observed_gaps()[0] <= 0.0 {
            return Err(Error::InvalidData(
                "initial observed gap must be positive".into(),
            ));
        }
        self.bounds.validate()?;
        self.ga.validate()
    }

    fn platoon(&self, params: ModelParams) -> PlatoonConfig {
        PlatoonConfig {
            leader: LeaderProfile::Recorded {
                dt: self.dt,
                positions: self.leader_position.clone(),
                speeds: self.leader_speed.clone(),
            },
            followers: vec![Driver::new(self.model, params)],
            vehicle_length: self.vehicle_length,
            initial_gaps: vec![self.observed_gaps()[0]],
            initial_speeds: vec![self.follower_speed[0]],
            dt: self.dt,
            duration: (self.n_samples() - 1) as f64 * self.dt,
            clamp_velocity: self.clamp_velocity,
            gap_policy: None,
            seed: 0,
            on_collision: CollisionPolicy::Halt,
            integrator: Integrator::Ballistic,
        }
    }
}

/// Simulated follower series aligned with the observation.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowerRun {
    pub gaps: Vec<f64>,
    pub speeds: Vec<f64>,
    pub accelerations: Vec<f64>,
    /// Set when the run stopped early on a collision.
    pub collided: bool,
}

/// Replays the observed leader and simulates the follower from its observed
/// initial gap and speed.
pub fn simulate_follower(
    problem: &CalibrationProblem,
    params: &ModelParams,
) -> Result<FollowerRun> {
    let traj = simulate_platoon(&problem.platoon(*params))?;
    Ok(FollowerRun {
        gaps: traj.gaps[1].clone(),
        speeds: traj.velocities(1),
        accelerations: traj.accelerations(1),
        collided: traj.halted_at.is_some(),
    })
}

/// Theil's U of spacing; runs that crash or stop on a collision score
/// `1 + unsimulated fraction`, above every feasible value.
fn fitness(problem: &CalibrationProblem, observed: &[f64], params: &ModelParams) -> (f64, bool) {
    let n = observed.len();
    match simulate_follower(problem, params) {
        Ok(run) if !run.collided && run.gaps.len() == n => match theils_u(observed, &run.gaps) {
            Ok(u) if u.is_finite() => (u, true),
            _ => (2.0, false),
        },
        Ok(run) => (1.0 + (n - run.gaps.len().min(n)) as f64 / n as f64, false),
        Err(_) => (2.0, false),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub model: Model,
    pub params: ModelParams,
    /// Theil's U of spacing at `params`.
    pub objective: f64,
    pub rmse_spacing: f64,
    pub rmse_speed: f64,
    /// Best objective after each generation, starting with the initial
    /// population.
    pub history: Vec<f64>,
    pub evaluations: usize,
    pub seed: u64,
}

pub fn calibrate_ga(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    calibrate_ga_observed(problem, |_, _| {})
}

/// As [`calibrate_ga`], calling `observer` with every evaluated parameter
/// set and its fitness. The observer may run on several threads.
pub fn calibrate_ga_observed<O>(
    problem: &CalibrationProblem,
    observer: O,
) -> Result<CalibrationResult>
where
    O: Fn(&ModelParams, f64) + Sync,
{
    problem.validate()?;
    let space = ParamSpace::new(&problem.bounds, ParamId::dynamic_set(problem.model))?;
    let observed = problem.observed_gaps();
    let ga = problem.ga;
    let evaluate = |pop: &[Vec<f64>]| -> Vec<(f64, bool)> {
        pop.par_iter()
            .map(|x| {
                let p = space.to_params(x);
                let f = fitness(problem, &observed, &p);
                observer(&p, f.0);
                f
            })
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    let (lo, hi, widths) = (space.lower(), space.upper(), space.widths());
    let size = if space.dim() == 0 { 1 } else { ga.population };
    let mut pop: Vec<Vec<f64>> = (0..size)
        .map(|_| {
            lo.iter()
                .zip(&hi)
                .map(|(&l, &h)| rng.random_range(l..=h))
                .collect()
        })
        .collect();
    let mut fit = evaluate(&pop);
    let mut evaluations = pop.len();
    if fit.iter().all(|f| !f.1) {
        return Err(Error::AllInfeasible);
    }
    let best_of = |fit: &[(f64, bool)]| {
        (0..fit.len())
            .min_by(|&i, &j| fit[i].0.total_cmp(&fit[j].0))
            .unwrap()
    };
    let mut history = vec![fit[best_of(&fit)].0];

    let mutation: Vec<Normal<f64>> = widths
        .iter()
        .map(|w| Normal::new(0.0, ga.mutation_scale * w).expect("non-negative scale"))
        .collect();
    let generations = if space.dim() == 0 { 0 } else { ga.generations };
    for _ in 0..generations {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&i, &j| fit[i].0.total_cmp(&fit[j].0));
        let mut next: Vec<Vec<f64>> = order
            .iter()
            .take(ga.elitism)
            .map(|&i| pop[i].clone())
            .collect();
        let mut next_fit: Vec<(f64, bool)> =
            order.iter().take(ga.elitism).map(|&i| fit[i]).collect();
        let mut children = Vec::with_capacity(pop.len() - next.len());
        while next.len() + children.len() < pop.len() {
            let mut tournament = || {
                (0..ga.tournament)
                    .map(|_| rng.random_range(0..pop.len()))
                    .min_by(|&i, &j| fit[i].0.total_cmp(&fit[j].0))
                    .unwrap()
            };
            let (p1, p2) = (tournament(), tournament());
            let mut child = pop[p1].clone();
            if rng.random_bool(ga.crossover_rate) {
                for (g, c) in child.iter_mut().enumerate() {
                    let (a, b) = (pop[p1][g], pop[p2][g]);
                    let (mn, mx) = (a.min(b), a.max(b));
                    let ext = ga.blend_alpha * (mx - mn);
                    let (l, h) = ((mn - ext).max(lo[g]), (mx + ext).min(hi[g]));
                    *c = if h > l { rng.random_range(l..=h) } else { l };
                }
            }
            for (g, c) in child.iter_mut().enumerate() {
                if rng.random_bool(ga.mutation_rate) {
                    *c += mutation[g].sample(&mut rng);
                }
            }
            space.clamp(&mut child);
            children.push(child);
        }
        let child_fit = evaluate(&children);
        evaluations += children.len();
        next.extend(children);
        next_fit.extend(child_fit);
        pop = next;
        fit = next_fit;
        history.push(fit[best_of(&fit)].0);
    }

    let best = best_of(&fit);
    let params = space.to_params(&pop[best]);
    let run = simulate_follower(problem, &params)?;
    let n = run.gaps.len().min(observed.len());
    Ok(CalibrationResult {
        model: problem.model,
        params,
        objective: fit[best].0,
        rmse_spacing: rmse(&observed[..n], &run.gaps[..n])?,
        rmse_speed: rmse(&problem.follower_speed[..n], &run.speeds[..n])?,
        history,
        evaluations,
        seed: problem.seed,
    })
}
