use serde::{Deserialize, Serialize};

/// Closed real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Self { lo, hi }
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    /// `self + p * other` for a non-negative weight `p`, widened outward by
    /// the rounding error of the two operations.
    pub fn add_weighted(&self, p: f64, other: &Interval) -> Interval {
        debug_assert!(p >= 0.0);
        let lo = self.lo + p * other.lo;
        let hi = self.hi + p * other.hi;
        let slack = 2.0 * f64::EPSILON;
        Interval::new(
            lo - slack * (self.lo.abs() + (p * other.lo).abs()) - f64::MIN_POSITIVE,
            hi + slack * (self.hi.abs() + (p * other.hi).abs()) + f64::MIN_POSITIVE,
        )
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}
