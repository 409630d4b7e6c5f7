//! Sound cell-wise checker for reach-avoid certificates.
//!
//! The state space is covered by a regular grid. Each cell must pass, with
//! interval bounds over the whole cell,
//!
//! 1. `max C ≤ 1` on the part of the cell inside the initial set,
//! 2. `min C ≥ 1/(1-ρ)` on the part inside the unsafe set,
//! 3. outside the target, `min C ≥ 1/(1-ρ)` or
//!    `min C - max E[C(next)] ≥ ε`.
//!
//! Failing cells are bisected up to `max_refine_depth` times. A cell is a
//! counterexample when it still fails at the depth limit or when its failed
//! condition is violated for certain at a concrete point; only the latter
//! makes the verdict `Refuted`.

use serde::{Deserialize, Serialize};

use crate::bounds::{
    dynamics_image_unchecked, policy_image, FeedForwardNetwork, Interval, PolicySpec,
};
use crate::error::{check_dim, Error, Result};
use crate::model::{safety_level, Aabb, ReachAvoidSpec, Region, StochasticSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationConfig {
    /// Required expected decrease `ε`.
    #[serde(alias = "epsilon_min")]
    pub epsilon: f64,
    pub initial_cells_per_dim: usize,
    /// Number of bisections allowed below an initial grid cell.
    pub max_refine_depth: usize,
    pub noise_cells_per_dim: usize,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            initial_cells_per_dim: 64,
            max_refine_depth: 10,
            noise_cells_per_dim: 12,
        }
    }
}

impl VerificationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::input("epsilon must be positive"));
        }
        if self.initial_cells_per_dim == 0 || self.noise_cells_per_dim == 0 {
            return Err(Error::input("cell counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    Refuted,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Initial,
    Safety,
    Decrease,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub cell: Aabb,
    pub condition: Condition,
    /// Violated at a concrete point of the cell, not merely unproven.
    pub certain: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub verdict: Verdict,
    pub failed_condition: Option<Condition>,
    pub counterexample_cells: Vec<Counterexample>,
    pub cells_checked: usize,
    pub epsilon_used: f64,
}

impl VerificationReport {
    pub fn is_certified(&self) -> bool {
        self.verdict == Verdict::Certified
    }
}

/// Everything a cell check needs, validated once per run.
struct Problem<'a> {
    cert: &'a FeedForwardNetwork,
    sys: &'a StochasticSystem,
    policy: &'a PolicySpec,
    spec: &'a ReachAvoidSpec,
    level: f64,
    epsilon: f64,
    noise: Vec<(Aabb, f64)>,
}

fn validate_inputs(
    cert: &FeedForwardNetwork,
    sys: &StochasticSystem,
    policy: &PolicySpec,
    spec: &ReachAvoidSpec,
) -> Result<()> {
    check_dim("certificate input", sys.state_dim(), cert.input_dim())?;
    check_dim("certificate output", 1, cert.output_dim())?;
    policy.validate_for(sys)?;
    spec.validate(&sys.state_space)
}

/// Sound enclosure of `E_w[C(f(x, π(x), w))]` over all `x ∈ state_cell`,
/// summing IBP bounds over a partition of the noise support.
pub fn bound_expected_next(
    cert: &FeedForwardNetwork,
    sys: &StochasticSystem,
    policy: &PolicySpec,
    state_cell: &Aabb,
    noise_partition: &[(Aabb, f64)],
) -> Result<Interval> {
    check_dim("state cell", sys.state_dim(), state_cell.dim())?;
    check_dim("certificate input", sys.state_dim(), cert.input_dim())?;
    policy.validate_for(sys)?;
    for (w, _) in noise_partition {
        check_dim("noise cell", sys.noise.dim(), w.dim())?;
    }
    Ok(expected_next(
        cert,
        sys,
        policy,
        state_cell,
        noise_partition,
    ))
}

fn expected_next(
    cert: &FeedForwardNetwork,
    sys: &StochasticSystem,
    policy: &PolicySpec,
    state_cell: &Aabb,
    noise_partition: &[(Aabb, f64)],
) -> Interval {
    let u = policy_image(policy, state_cell, &sys.input_space).expect("validated dimensions");
    let mut acc = Interval::point(0.0);
    for (w, p) in noise_partition {
        if *p <= 0.0 {
            continue;
        }
        let img = dynamics_image_unchecked(&sys.dynamics, &sys.state_space, state_cell, &u, w);
        let enc = cert.bound_scalar(img.lower(), img.upper());
        acc = acc.add_weighted(*p, &enc);
    }
    // Partition masses sum to one only up to rounding.
    let slack =
        (noise_partition.len() as f64 + 2.0) * f64::EPSILON * acc.lo.abs().max(acc.hi.abs());
    Interval::new(acc.lo - slack, acc.hi + slack)
}

impl Problem<'_> {
    fn bound(&self, cell: &Aabb) -> Interval {
        self.cert.bound_scalar(cell.lower(), cell.upper())
    }

    /// First failing condition of `cell`, if any.
    fn check(&self, cell: &Aabb) -> Option<Condition> {
        for piece in self.spec.initial.clip_box(cell) {
            if self.bound(&piece).hi > 1.0 {
                return Some(Condition::Initial);
            }
        }
        for piece in self.spec.unsafe_set.clip_box(cell) {
            if self.bound(&piece).lo < self.level {
                return Some(Condition::Safety);
            }
        }
        if self.spec.target.covers_box(cell) {
            return None;
        }
        let here = self.bound(cell);
        if here.lo >= self.level {
            return None;
        }
        let next = expected_next(self.cert, self.sys, self.policy, cell, &self.noise);
        if here.lo - next.hi >= self.epsilon {
            None
        } else {
            Some(Condition::Decrease)
        }
    }

    /// Whether `condition` is violated at a concrete point of `cell`.
    fn certainly_violated(&self, cell: &Aabb, condition: Condition) -> bool {
        match condition {
            Condition::Initial => self.spec.initial.clip_box(cell).iter().any(|piece| {
                let p = Aabb::point(&piece.center()).expect("finite centre");
                self.bound(&p).lo > 1.0
            }),
            Condition::Safety => self.spec.unsafe_set.clip_box(cell).iter().any(|piece| {
                let p = Aabb::point(&piece.center()).expect("finite centre");
                self.bound(&p).hi < self.level
            }),
            Condition::Decrease => {
                let c = cell.center();
                if self.spec.target.contains_point(&c) {
                    return false;
                }
                let p = Aabb::point(&c).expect("finite centre");
                let here = self.bound(&p);
                if here.hi >= self.level {
                    return false;
                }
                let next = expected_next(self.cert, self.sys, self.policy, &p, &self.noise);
                here.hi - next.lo < self.epsilon
            }
        }
    }

    fn refine(&self, cell: Aabb, depth: usize, max_depth: usize, out: &mut CellLog) {
        out.checked += 1;
        let Some(condition) = self.check(&cell) else {
            return;
        };
        if self.certainly_violated(&cell, condition) {
            out.counterexamples.push(Counterexample {
                cell,
                condition,
                certain: true,
            });
            return;
        }
        if depth >= max_depth {
            out.counterexamples.push(Counterexample {
                cell,
                condition,
                certain: false,
            });
            return;
        }
        let (a, b) = cell.bisect();
        self.refine(a, depth + 1, max_depth, out);
        self.refine(b, depth + 1, max_depth, out);
    }
}

#[derive(Default)]
struct CellLog {
    checked: usize,
    counterexamples: Vec<Counterexample>,
}

pub fn verify_certificate(
    cert: &FeedForwardNetwork,
    sys: &StochasticSystem,
    policy: &PolicySpec,
    spec: &ReachAvoidSpec,
    cfg: &VerificationConfig,
) -> Result<VerificationReport> {
    cfg.validate()?;
    validate_inputs(cert, sys, policy, spec)?;
    let problem = Problem {
        cert,
        sys,
        policy,
        spec,
        level: safety_level(spec.rho)?,
        epsilon: cfg.epsilon,
        noise: sys.noise.partition(cfg.noise_cells_per_dim)?,
    };
    let grid = sys.state_space.grid(cfg.initial_cells_per_dim);
    let run = |cell: Aabb| {
        let mut log = CellLog::default();
        problem.refine(cell, 0, cfg.max_refine_depth, &mut log);
        log
    };

    #[cfg(feature = "parallel")]
    let logs: Vec<CellLog> = {
        use rayon::prelude::*;
        grid.into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let logs: Vec<CellLog> = grid.into_iter().map(run).collect();

    let mut cells_checked = 0;
    let mut counterexample_cells = Vec::new();
    for log in logs {
        cells_checked += log.checked;
        counterexample_cells.extend(log.counterexamples);
    }
    counterexample_cells.sort_by(|a, b| a.cell.corner_cmp(&b.cell));

    let first_certain = counterexample_cells.iter().find(|c| c.certain);
    let (verdict, failed_condition) = match (first_certain, counterexample_cells.first()) {
        (Some(c), _) => (Verdict::Refuted, Some(c.condition)),
        (None, Some(c)) => (Verdict::Inconclusive, Some(c.condition)),
        (None, None) => (Verdict::Certified, None),
    };
    Ok(VerificationReport {
        verdict,
        failed_condition,
        counterexample_cells,
        cells_checked,
        epsilon_used: cfg.epsilon,
    })
}

/// Largest `ρ ∈ [lo, hi]` (to within `tol`) certified by `cert`, found by
/// bisection. `None` when even `lo` fails.
#[allow(clippy::too_many_arguments)]
pub fn max_certifiable_threshold(
    cert: &FeedForwardNetwork,
    sys: &StochasticSystem,
    policy: &PolicySpec,
    spec: &ReachAvoidSpec,
    lo: f64,
    hi: f64,
    tol: f64,
    cfg: &VerificationConfig,
) -> Result<Option<f64>> {
    if !(0.0 <= lo && lo < hi && hi <= 1.0) {
        return Err(Error::input(format!(
            "threshold search needs 0 <= lo < hi <= 1, got [{lo}, {hi}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::input("threshold search tolerance must be positive"));
    }
    let certifies = |rho: f64| -> Result<bool> {
        if rho >= 1.0 {
            return Ok(false);
        }
        Ok(verify_certificate(cert, sys, policy, &spec.with_rho(rho)?, cfg)?.is_certified())
    };
    if !certifies(lo)? {
        return Ok(None);
    }
    if certifies(hi)? {
        return Ok(Some(hi));
    }
    let (mut good, mut bad) = (lo, hi);
    while bad - good > tol {
        let mid = 0.5 * (good + bad);
        if certifies(mid)? {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(Some(good))
}

/// System and specification in which `changed` absorbs and counts as unsafe.
pub fn worst_case_setting(
    sys: &StochasticSystem,
    spec: &ReachAvoidSpec,
    changed: &Region,
) -> Result<(StochasticSystem, ReachAvoidSpec)> {
    let absorbing = sys.with_absorbing(changed)?;
    let mut worst = spec.clone();
    worst.unsafe_set = spec.unsafe_set.union(changed)?;
    Ok((absorbing, worst))
}

/// Re-verification baseline: search the best threshold of the unchanged
/// certificate on the worst-case system.
#[allow(clippy::too_many_arguments)]
pub fn recertify_worstcase(
    cert: &FeedForwardNetwork,
    sys: &StochasticSystem,
    policy: &PolicySpec,
    spec: &ReachAvoidSpec,
    changed: &Region,
    cfg: &VerificationConfig,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<Option<f64>> {
    let (worst_sys, worst_spec) = worst_case_setting(sys, spec, changed)?;
    max_certifiable_threshold(cert, &worst_sys, policy, &worst_spec, lo, hi, tol, cfg)
}
