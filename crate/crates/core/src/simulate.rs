//! Monte Carlo estimation of reach-avoid probabilities.
//!
//! Trajectory `k` of every run draws its noise from ChaCha8 stream `k` of
//! the configured seed, so estimates do not depend on thread scheduling.
//! Running out of horizon counts as a failure, which keeps every estimate
//! one-sided (a lower bound on the unbounded-horizon probability).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::bounds::PolicySpec;
use crate::error::{check_dim, Error, Result};
use crate::model::{ReachAvoidSpec, Region, StochasticSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Maximum number of steps per trajectory.
    pub horizon: usize,
    pub trajectories: usize,
    pub seed: u64,
    pub confidence: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 300,
            trajectories: 10_000,
            seed: 0,
            confidence: 0.99,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.trajectories == 0 {
            return Err(Error::input("horizon and trajectories must be at least 1"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::input("confidence must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "step")]
pub enum Outcome {
    ReachedSafely(usize),
    HitUnsafe(usize),
    HorizonExceeded,
}

impl Outcome {
    pub fn is_success(self) -> bool {
        matches!(self, Outcome::ReachedSafely(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub successes: usize,
    pub trials: usize,
    pub point_estimate: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl EstimateReport {
    /// Two-sided Clopper–Pearson interval at `confidence`.
    pub fn clopper_pearson(successes: usize, trials: usize, confidence: f64) -> Result<Self> {
        if trials == 0 || successes > trials {
            return Err(Error::input(
                "need 0 <= successes <= trials and trials >= 1",
            ));
        }
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(Error::input("confidence must lie in (0, 1)"));
        }
        let (k, n) = (successes as f64, trials as f64);
        let tail = 0.5 * (1.0 - confidence);
        let quantile = |a: f64, b: f64, p: f64| {
            Beta::new(a, b)
                .map(|d| d.inverse_cdf(p))
                .map_err(|e| Error::input(format!("beta quantile: {e}")))
        };
        let ci_lower = if successes == 0 {
            0.0
        } else {
            quantile(k, n - k + 1.0, tail)?
        };
        let ci_upper = if successes == trials {
            1.0
        } else {
            quantile(k + 1.0, n - k, 1.0 - tail)?
        };
        let point_estimate = k / n;
        Ok(Self {
            successes,
            trials,
            point_estimate,
            ci_lower: ci_lower.min(point_estimate),
            ci_upper: ci_upper.max(point_estimate),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitEstimate {
    pub x0: Vec<f64>,
    pub estimate: EstimateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub per_init: Vec<InitEstimate>,
    /// The initial state with the smallest lower confidence bound.
    pub worst: InitEstimate,
}

/// Wrap `sys` so that every state of `region` is a fixed point.
pub fn make_absorbing(sys: &StochasticSystem, region: &Region) -> Result<StochasticSystem> {
    sys.with_absorbing(region)
}

fn check_start(
    sys: &StochasticSystem,
    policy: &PolicySpec,
    spec: &ReachAvoidSpec,
    x0: &[f64],
) -> Result<()> {
    check_dim("initial state", sys.state_dim(), x0.len())?;
    if !sys.state_space.contains(x0) {
        return Err(Error::input(format!(
            "initial state {x0:?} is outside the state space"
        )));
    }
    policy.validate_for(sys)?;
    spec.validate(&sys.state_space)
}

/// One trajectory from `x0` for at most `horizon` steps.
pub fn simulate_trajectory(
    sys: &StochasticSystem,
    policy: &PolicySpec,
    spec: &ReachAvoidSpec,
    x0: &[f64],
    horizon: usize,
    rng: &mut impl Rng,
) -> Result<Outcome> {
    check_start(sys, policy, spec, x0)?;
    Ok(run(sys, policy, spec, x0, horizon, rng))
}

fn run(
    sys: &StochasticSystem,
    policy: &PolicySpec,
    spec: &ReachAvoidSpec,
    x0: &[f64],
    horizon: usize,
    rng: &mut impl Rng,
) -> Outcome {
    let mut x = x0.to_vec();
    let mut next = vec![0.0; x.len()];
    let mut u = vec![0.0; sys.input_space.dim()];
    let mut unit = vec![0.0; sys.noise.dim()];
    let mut w = vec![0.0; sys.noise.dim()];
    for t in 0..=horizon {
        if spec.target.contains_point(&x) {
            return Outcome::ReachedSafely(t);
        }
        if spec.unsafe_set.contains_point(&x) {
            return Outcome::HitUnsafe(t);
        }
        if t == horizon || sys.dynamics.absorbs(&x) {
            // An absorbed state outside both sets never moves again.
            break;
        }
        policy.act(&x, &sys.input_space, &mut u);
        unit.iter_mut().for_each(|v| *v = rng.random::<f64>());
        sys.noise.sample_with(&unit, &mut w);
        sys.successor(&x, &u, &w, &mut next);
        std::mem::swap(&mut x, &mut next);
    }
    Outcome::HorizonExceeded
}

/// Independent trajectories from every initial state.
pub fn estimate_reach_avoid(
    sys: &StochasticSystem,
    policy: &PolicySpec,
    spec: &ReachAvoidSpec,
    init_points: &[Vec<f64>],
    cfg: &SimConfig,
) -> Result<EstimateSummary> {
    cfg.validate()?;
    if init_points.is_empty() {
        return Err(Error::input("at least one initial state is required"));
    }
    for x0 in init_points {
        check_start(sys, policy, spec, x0)?;
        if !spec.initial.contains_point(x0) {
            return Err(Error::input(format!(
                "initial state {x0:?} is not in the initial set"
            )));
        }
    }

    let mut per_init = Vec::with_capacity(init_points.len());
    for x0 in init_points {
        let trial = |k: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(k as u64);
            run(sys, policy, spec, x0, cfg.horizon, &mut rng).is_success() as usize
        };
        #[cfg(feature = "parallel")]
        let successes: usize = {
            use rayon::prelude::*;
            (0..cfg.trajectories).into_par_iter().map(trial).sum()
        };
        #[cfg(not(feature = "parallel"))]
        let successes: usize = (0..cfg.trajectories).map(trial).sum();
        per_init.push(InitEstimate {
            x0: x0.clone(),
            estimate: EstimateReport::clopper_pearson(successes, cfg.trajectories, cfg.confidence)?,
        });
    }
    let worst = per_init
        .iter()
        .min_by(|a, b| a.estimate.ci_lower.total_cmp(&b.estimate.ci_lower))
        .cloned()
        .expect("at least one initial state");
    Ok(EstimateSummary { per_init, worst })
}
