//! Axis-aligned boxes and finite unions of them.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A closed axis-aligned box `[lower_0, upper_0] × ... × [lower_n, upper_n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct Aabb {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for Aabb {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        Aabb::new(raw.lower, raw.upper)
    }
}

impl Aabb {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::input("box must have at least one dimension"));
        }
        check_dim("box bounds", lower.len(), upper.len())?;
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::input(format!("box bound {i} is not finite")));
            }
            if lo > hi {
                return Err(Error::input(format!(
                    "box lower bound exceeds upper bound in dimension {i} ({lo} > {hi})"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval `[lo, hi]` in every one of `dim` dimensions.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    /// Zero-width box at a point.
    pub fn point(p: &[f64]) -> Result<Self> {
        Self::new(p.to_vec(), p.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    /// Index of the widest dimension; the lowest index wins ties.
    pub fn widest_dim(&self) -> usize {
        let mut best = 0;
        for i in 1..self.dim() {
            if self.width(i) > self.width(best) {
                best = i;
            }
        }
        best
    }

    /// Bisect along `axis`.
    pub fn split(&self, axis: usize) -> (Aabb, Aabb) {
        let mid = 0.5 * (self.lower[axis] + self.upper[axis]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.upper[axis] = mid;
        right.lower[axis] = mid;
        (left, right)
    }

    /// Bisect along the widest dimension.
    pub fn bisect(&self) -> (Aabb, Aabb) {
        self.split(self.widest_dim())
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (lo, hi))| lo <= x && x <= hi)
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }

    /// Closed-set intersection test (touching faces count).
    pub fn intersects(&self, other: &Aabb) -> bool {
        other.dim() == self.dim()
            && (0..self.dim())
                .all(|i| self.lower[i] <= other.upper[i] && other.lower[i] <= self.upper[i])
    }

    pub fn intersection(&self, other: &Aabb) -> Option<Aabb> {
        if !self.intersects(other) {
            return None;
        }
        let lower = (0..self.dim())
            .map(|i| self.lower[i].max(other.lower[i]))
            .collect();
        let upper = (0..self.dim())
            .map(|i| self.upper[i].min(other.upper[i]))
            .collect();
        Some(Aabb { lower, upper })
    }

    pub fn hull(&self, other: &Aabb) -> Aabb {
        let lower = (0..self.dim())
            .map(|i| self.lower[i].min(other.lower[i]))
            .collect();
        let upper = (0..self.dim())
            .map(|i| self.upper[i].max(other.upper[i]))
            .collect();
        Aabb { lower, upper }
    }

    /// Clamp a point into the box.
    pub fn clamp(&self, p: &mut [f64]) {
        for (x, (lo, hi)) in p.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*lo, *hi);
        }
    }

    /// Point at fractional coordinates `t ∈ [0,1]^n`.
    pub fn lerp(&self, t: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| (self.lower[i] + t[i] * self.width(i)).min(self.upper[i]))
            .collect()
    }

    /// Lexicographic order of lower corners, then upper corners.
    pub fn corner_cmp(&self, other: &Aabb) -> Ordering {
        lex_cmp(&self.lower, &other.lower).then_with(|| lex_cmp(&self.upper, &other.upper))
    }

    /// Regular grid of `per_dim^n` cells covering the box.
    pub fn grid(&self, per_dim: usize) -> Vec<Aabb> {
        let per_dim = per_dim.max(1);
        let n = self.dim();
        let edges: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..=per_dim)
                    .map(|k| {
                        if k == per_dim {
                            self.upper[i]
                        } else {
                            self.lower[i] + self.width(i) * k as f64 / per_dim as f64
                        }
                    })
                    .collect()
            })
            .collect();
        let total = per_dim.pow(n as u32);
        let mut cells = Vec::with_capacity(total);
        let mut idx = vec![0usize; n];
        for _ in 0..total {
            let lower = (0..n).map(|i| edges[i][idx[i]]).collect();
            let upper = (0..n).map(|i| edges[i][idx[i] + 1]).collect();
            cells.push(Aabb { lower, upper });
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < per_dim {
                    break;
                }
                *slot = 0;
            }
        }
        cells
    }
}

pub(crate) fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

/// A finite union of closed boxes of equal dimension. May be empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Aabb>", into = "Vec<Aabb>")]
pub struct Region {
    boxes: Vec<Aabb>,
}

impl TryFrom<Vec<Aabb>> for Region {
    type Error = Error;

    fn try_from(boxes: Vec<Aabb>) -> Result<Self> {
        Region::new(boxes)
    }
}

impl From<Region> for Vec<Aabb> {
    fn from(r: Region) -> Self {
        r.boxes
    }
}

impl From<Aabb> for Region {
    fn from(b: Aabb) -> Self {
        Region { boxes: vec![b] }
    }
}

impl Region {
    pub fn new(boxes: Vec<Aabb>) -> Result<Self> {
        if let Some(first) = boxes.first() {
            for b in &boxes[1..] {
                check_dim("region boxes", first.dim(), b.dim())?;
            }
        }
        Ok(Self { boxes })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn boxes(&self) -> &[Aabb] {
        &self.boxes
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Dimension of the boxes, `None` for the empty region.
    pub fn dim(&self) -> Option<usize> {
        self.boxes.first().map(Aabb::dim)
    }

    /// Membership test; the empty region contains nothing.
    pub fn contains(&self, p: &[f64]) -> Result<bool> {
        match self.dim() {
            None => Ok(false),
            Some(d) => {
                check_dim("region membership", d, p.len())?;
                Ok(self.boxes.iter().any(|b| b.contains(p)))
            }
        }
    }

    /// Unchecked membership for hot loops where dimensions were validated upfront.
    pub(crate) fn contains_point(&self, p: &[f64]) -> bool {
        self.boxes.iter().any(|b| b.contains(p))
    }

    pub fn intersects_box(&self, cell: &Aabb) -> bool {
        self.boxes.iter().any(|b| b.intersects(cell))
    }

    /// True when `cell` lies inside a single box of the region. This is a
    /// sufficient, not necessary, condition for `cell ⊆ region`.
    pub fn covers_box(&self, cell: &Aabb) -> bool {
        self.boxes.iter().any(|b| b.contains_box(cell))
    }

    /// Pieces `cell ∩ b` for every box `b` of the region that meets `cell`.
    pub fn clip_box(&self, cell: &Aabb) -> Vec<Aabb> {
        self.boxes
            .iter()
            .filter_map(|b| b.intersection(cell))
            .collect()
    }

    pub fn push(&mut self, b: Aabb) -> Result<()> {
        if let Some(d) = self.dim() {
            check_dim("region boxes", d, b.dim())?;
        }
        self.boxes.push(b);
        Ok(())
    }

    pub fn union(&self, other: &Region) -> Result<Region> {
        let mut boxes = self.boxes.clone();
        boxes.extend(other.boxes.iter().cloned());
        Region::new(boxes)
    }

    /// Every box lies inside `outer`.
    pub fn within(&self, outer: &Aabb) -> bool {
        self.boxes.iter().all(|b| outer.contains_box(b))
    }

    pub fn total_volume(&self) -> f64 {
        self.boxes.iter().map(Aabb::volume).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_region_contains_nothing() {
        assert!(!Region::empty().contains(&[0.5, 0.5]).unwrap());
    }

    #[test]
    fn boundary_points_are_members() {
        let r = Region::from(Aabb::cube(2, 0.0, 1.0).unwrap());
        assert!(r.contains(&[1.0, 1.0]).unwrap());
        assert!(r.contains(&[0.0, 0.3]).unwrap());
        assert!(!r.contains(&[1.0 + 1e-12, 0.3]).unwrap());
    }

    #[test]
    fn nine_rooms_target_membership() {
        let target = Region::from(Aabb::cube(2, 2.4, 2.6).unwrap());
        assert!(target.contains(&[2.5, 2.5]).unwrap());
    }

    #[test]
    fn membership_dimension_mismatch_is_an_error() {
        let r = Region::from(Aabb::cube(2, 0.0, 1.0).unwrap());
        assert!(matches!(r.contains(&[0.5]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn inverted_bounds_are_rejected() {
        assert!(Aabb::new(vec![1.0], vec![0.0]).is_err());
        assert!(Aabb::new(vec![], vec![]).is_err());
        let parsed: std::result::Result<Aabb, _> =
            serde_json::from_str(r#"{"lower":[2.0],"upper":[1.0]}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn grid_covers_the_box() {
        let b = Aabb::new(vec![0.0, -1.0], vec![3.0, 1.0]).unwrap();
        let cells = b.grid(3);
        assert_eq!(cells.len(), 9);
        let vol: f64 = cells.iter().map(Aabb::volume).sum();
        assert!((vol - b.volume()).abs() < 1e-12);
        assert!(cells.iter().all(|c| b.contains_box(c)));
    }

    #[test]
    fn bisect_picks_widest_dimension() {
        let b = Aabb::new(vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let (l, r) = b.bisect();
        assert_eq!(l.upper(), &[1.0, 1.0]);
        assert_eq!(r.lower(), &[0.0, 1.0]);
    }

    proptest::proptest! {
        #[test]
        fn adding_a_box_never_removes_points(
            a in proptest::collection::vec((-2.0f64..2.0, 0.0f64..1.0), 2),
            b in proptest::collection::vec((-2.0f64..2.0, 0.0f64..1.0), 2),
            p in proptest::collection::vec(-3.0f64..3.0, 2),
        ) {
            let mk = |v: &Vec<(f64, f64)>| Aabb::new(
                v.iter().map(|(lo, _)| *lo).collect(),
                v.iter().map(|(lo, w)| lo + w).collect(),
            ).unwrap();
            let small = Region::from(mk(&a));
            let big = small.union(&Region::from(mk(&b))).unwrap();
            if small.contains(&p).unwrap() {
                proptest::prop_assert!(big.contains(&p).unwrap());
            }
        }
    }
}
