//! Branch-and-bound sandwich `I⁻ ≤ inf { C(x) : x ∈ region } ≤ I⁺`.
//!
//! Cells are kept in a best-first frontier ordered by their IBP lower bound
//! (ties by lower corner). The cheapest cell is bisected along its widest
//! dimension; every evaluated cell centre is a concrete witness for `I⁺`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::bounds::FeedForwardNetwork;
use crate::error::{check_dim, Error, Result};
use crate::model::{Aabb, Region};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementConfig {
    pub gap_tolerance: f64,
    pub max_cells: usize,
    /// Stop as soon as `I⁻` reaches this value.
    pub target_value: Option<f64>,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            gap_tolerance: 1e-6,
            max_cells: 10_000,
            target_value: None,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gap_tolerance > 0.0) {
            return Err(Error::input("gap_tolerance must be positive"));
        }
        if self.max_cells == 0 {
            return Err(Error::input("max_cells must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfimumBounds {
    pub i_lower: f64,
    pub i_upper: f64,
    pub cells_explored: usize,
    pub converged: bool,
}

impl InfimumBounds {
    /// Bounds for the infimum over the empty set, `+∞`.
    pub fn unbounded() -> Self {
        Self {
            i_lower: f64::INFINITY,
            i_upper: f64::INFINITY,
            cells_explored: 0,
            converged: true,
        }
    }

    pub fn gap(&self) -> f64 {
        self.i_upper - self.i_lower
    }
}

struct Frontier {
    lower: f64,
    cell: Aabb,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // Reversed so that `BinaryHeap` pops the smallest bound first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .lower
            .total_cmp(&self.lower)
            .then_with(|| other.cell.corner_cmp(&self.cell))
    }
}

/// Bound the infimum of the first network output over `region`.
pub fn bound_infimum(
    cert: &FeedForwardNetwork,
    region: &Region,
    cfg: &RefinementConfig,
) -> Result<InfimumBounds> {
    cfg.validate()?;
    let dim = region
        .dim()
        .ok_or_else(|| Error::input("infimum over an empty region is undefined"))?;
    check_dim("infimum region", cert.input_dim(), dim)?;

    let mut heap = BinaryHeap::new();
    let mut i_upper = f64::INFINITY;
    let mut explored = 0usize;
    let visit = |cell: Aabb, heap: &mut BinaryHeap<Frontier>, i_upper: &mut f64| {
        let lower = cert.bound_scalar(cell.lower(), cell.upper()).lo;
        let witness = cert.eval_scalar(&cell.center());
        *i_upper = i_upper.min(witness);
        heap.push(Frontier { lower, cell });
    };

    for b in region.boxes() {
        visit(b.clone(), &mut heap, &mut i_upper);
        explored += 1;
    }

    let mut converged = false;
    loop {
        let best = heap.peek().expect("frontier is never empty").lower;
        if i_upper - best <= cfg.gap_tolerance {
            converged = true;
            break;
        }
        if cfg.target_value.is_some_and(|t| best >= t) {
            break;
        }
        if explored + 2 > cfg.max_cells {
            break;
        }
        let Frontier { cell, .. } = heap.pop().expect("frontier is never empty");
        let (a, b) = cell.bisect();
        visit(a, &mut heap, &mut i_upper);
        visit(b, &mut heap, &mut i_upper);
        explored += 2;
    }

    let i_lower = heap.peek().map(|f| f.lower).unwrap_or(f64::INFINITY);
    Ok(InfimumBounds {
        i_lower,
        i_upper,
        cells_explored: explored,
        converged,
    })
}
