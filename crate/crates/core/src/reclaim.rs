//! Reclaimed thresholds from bounds on a certificate's infimum over the
//! changed region.
//!
//! With `I = inf { C(x) : x ∈ X? }`, the largest threshold the unchanged
//! certificate still proves for every dynamics that agrees with the original
//! outside `X?` is `min(rho, 1 - 1/I)` when `I ≥ 1`, and no such threshold
//! exists when `I < 1`. A sandwich `I⁻ ≤ I ≤ I⁺` gives the sound output
//! `min(rho, 1 - 1/I⁻)` and the refinement ceiling `min(rho, 1 - 1/I⁺)`.

use serde::{Deserialize, Serialize};

use crate::bounds::FeedForwardNetwork;
use crate::error::{Error, Result};
use crate::infimum::{bound_infimum, InfimumBounds, RefinementConfig};
use crate::model::{check_probability, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReclaimStatus {
    Reclaimed,
    NoReclaimableThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReclaimResult {
    pub status: ReclaimStatus,
    pub rho_lower: f64,
    pub rho_upper: f64,
    pub inf_bounds: InfimumBounds,
    pub original_rho: f64,
}

impl ReclaimResult {
    pub fn is_reclaimed(&self) -> bool {
        self.status == ReclaimStatus::Reclaimed
    }

    /// Sound threshold, zero when nothing could be reclaimed.
    pub fn guaranteed(&self) -> f64 {
        match self.status {
            ReclaimStatus::Reclaimed => self.rho_lower,
            ReclaimStatus::NoReclaimableThreshold => 0.0,
        }
    }

    /// Flat JSON report fragment.
    pub fn report(&self) -> serde_json::Value {
        serde_json::json!({
            "status": self.status,
            "rho_lower": self.rho_lower,
            "rho_upper": self.rho_upper,
            "i_lower": finite_or_null(self.inf_bounds.i_lower),
            "i_upper": finite_or_null(self.inf_bounds.i_upper),
            "cells_explored": self.inf_bounds.cells_explored,
        })
    }
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}

/// `min(rho, 1 - 1/I)`, monotone non-decreasing in `I` on `(0, ∞)`.
fn capped(rho: f64, infimum: f64) -> f64 {
    rho.min(1.0 - 1.0 / infimum)
}

pub fn reclaim_threshold(rho: f64, inf_bounds: InfimumBounds) -> Result<ReclaimResult> {
    check_probability("rho", rho)?;
    if inf_bounds.i_lower.is_nan()
        || inf_bounds.i_upper.is_nan()
        || inf_bounds.i_lower > inf_bounds.i_upper
    {
        return Err(Error::input("infimum bounds must satisfy I⁻ <= I⁺"));
    }
    if inf_bounds.i_lower < 1.0 {
        return Ok(ReclaimResult {
            status: ReclaimStatus::NoReclaimableThreshold,
            rho_lower: 0.0,
            rho_upper: if inf_bounds.i_upper >= 1.0 {
                capped(rho, inf_bounds.i_upper)
            } else {
                0.0
            },
            inf_bounds,
            original_rho: rho,
        });
    }
    Ok(ReclaimResult {
        status: ReclaimStatus::Reclaimed,
        rho_lower: capped(rho, inf_bounds.i_lower),
        rho_upper: capped(rho, inf_bounds.i_upper),
        inf_bounds,
        original_rho: rho,
    })
}

/// Bound the infimum over `changed` and reclaim. An empty `changed` region
/// leaves the original threshold intact.
pub fn reclaim(
    cert: &FeedForwardNetwork,
    rho: f64,
    changed: &Region,
    cfg: &RefinementConfig,
) -> Result<ReclaimResult> {
    let bounds = if changed.is_empty() {
        InfimumBounds::unbounded()
    } else {
        bound_infimum(cert, changed, cfg)?
    };
    reclaim_threshold(rho, bounds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementDecision {
    /// The sound threshold already meets the request.
    AlreadyMet,
    /// A finer mesh over the changed region may lift `ρ̃⁻` far enough.
    RefineMayHelp,
    /// Even the exact infimum could not deliver the request.
    Unreachable,
}

pub fn needs_refinement(desired: f64, result: &ReclaimResult) -> Result<RefinementDecision> {
    check_probability("desired threshold", desired)?;
    if result.status != ReclaimStatus::Reclaimed {
        return Err(Error::input(
            "refinement decision requires a reclaimed threshold",
        ));
    }
    Ok(if desired <= result.rho_lower {
        RefinementDecision::AlreadyMet
    } else if desired <= result.rho_upper {
        RefinementDecision::RefineMayHelp
    } else {
        RefinementDecision::Unreachable
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds(lo: f64, hi: f64) -> InfimumBounds {
        InfimumBounds {
            i_lower: lo,
            i_upper: hi,
            cells_explored: 1,
            converged: true,
        }
    }

    #[test]
    fn narrative_example() {
        let r = reclaim_threshold(0.88, bounds(10.0 / 3.0, 5.0)).unwrap();
        assert_eq!(r.status, ReclaimStatus::Reclaimed);
        assert!((r.rho_lower - 0.70).abs() < 1e-12);
        assert!((r.rho_upper - 0.80).abs() < 1e-12);
    }

    #[test]
    fn unit_infimum_reclaims_zero() {
        let r = reclaim_threshold(0.6, bounds(1.0, 1.0)).unwrap();
        assert_eq!((r.rho_lower, r.rho_upper), (0.0, 0.0));
        assert!(r.is_reclaimed());
    }

    #[test]
    fn below_one_has_no_threshold() {
        let r = reclaim_threshold(0.88, bounds(0.9, 2.0)).unwrap();
        assert_eq!(r.status, ReclaimStatus::NoReclaimableThreshold);
        assert_eq!(r.guaranteed(), 0.0);
    }

    #[test]
    fn capped_by_original() {
        let r = reclaim_threshold(0.88, bounds(25.0, 30.0)).unwrap();
        assert_eq!(r.rho_lower, 0.88);
    }

    #[test]
    fn invalid_rho_is_rejected() {
        assert!(reclaim_threshold(1.2, bounds(2.0, 3.0)).is_err());
        assert!(reclaim_threshold(-0.1, bounds(2.0, 3.0)).is_err());
    }

    #[test]
    fn empty_change_keeps_original() {
        let net = FeedForwardNetwork::constant(2, 0.1).unwrap();
        let r = reclaim(&net, 0.77, &Region::empty(), &RefinementConfig::default()).unwrap();
        assert_eq!(r.rho_lower, 0.77);
        assert_eq!(r.report()["i_lower"], serde_json::Value::Null);
    }

    #[test]
    fn refinement_decisions() {
        let mut r = reclaim_threshold(0.9, bounds(10.0 / 3.0, 1.0 / 0.15)).unwrap();
        assert!((r.rho_upper - 0.85).abs() < 1e-12);
        assert_eq!(
            needs_refinement(0.65, &r).unwrap(),
            RefinementDecision::AlreadyMet
        );
        assert_eq!(
            needs_refinement(0.80, &r).unwrap(),
            RefinementDecision::RefineMayHelp
        );
        assert_eq!(
            needs_refinement(0.90, &r).unwrap(),
            RefinementDecision::Unreachable
        );
        r.status = ReclaimStatus::NoReclaimableThreshold;
        assert!(needs_refinement(0.5, &r).is_err());
    }

    proptest::proptest! {
        #[test]
        fn monotone_capped_and_sandwiched(
            rho in 0.0f64..1.0, a in 1.0f64..100.0, b in 1.0f64..100.0, t in 0.0f64..1.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let r = reclaim_threshold(rho, bounds(lo, hi)).unwrap();
            proptest::prop_assert!(r.rho_lower <= r.rho_upper);
            proptest::prop_assert!(r.rho_upper <= rho);
            let mid = lo + t * (hi - lo);
            let exact = rho.min(1.0 - 1.0 / mid);
            proptest::prop_assert!(r.rho_lower <= exact && exact <= r.rho_upper);
            let higher = reclaim_threshold(rho, bounds(hi, hi)).unwrap();
            proptest::prop_assert!(higher.rho_lower >= r.rho_lower);
        }

        #[test]
        fn fixed_point_returns_rho(rho in 0.0f64..0.99) {
            let i = 1.0 / (1.0 - rho);
            let r = reclaim_threshold(rho, bounds(i, i)).unwrap();
            proptest::prop_assert!((r.rho_lower - rho).abs() < 1e-12);
            proptest::prop_assert!((r.rho_upper - rho).abs() < 1e-12);
        }
    }
}
