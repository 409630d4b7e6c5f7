//! Independent per-dimension triangular disturbances.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::Aabb;

/// Triangular law on `[low, high]` with peak at `mode`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Triangular {
    pub low: f64,
    pub high: f64,
    pub mode: f64,
}

#[derive(Deserialize)]
struct RawTriangular {
    low: f64,
    high: f64,
    mode: Option<f64>,
}

impl<'de> Deserialize<'de> for Triangular {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawTriangular::deserialize(d)?;
        let mode = raw.mode.unwrap_or(0.5 * (raw.low + raw.high));
        Triangular::new(raw.low, raw.high, mode).map_err(serde::de::Error::custom)
    }
}

impl Triangular {
    pub fn new(low: f64, high: f64, mode: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && mode.is_finite()) {
            return Err(Error::input("triangular parameters must be finite"));
        }
        if !(low <= mode && mode <= high) {
            return Err(Error::input(format!(
                "triangular law needs low <= mode <= high, got ({low}, {mode}, {high})"
            )));
        }
        Ok(Self { low, high, mode })
    }

    /// Symmetric law on `[low, high]`.
    pub fn symmetric(low: f64, high: f64) -> Result<Self> {
        Self::new(low, high, 0.5 * (low + high))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (a, b, m) = (self.low, self.high, self.mode);
        if x < a {
            return 0.0;
        }
        if x >= b {
            return 1.0;
        }
        // here a <= x < b, so b > a
        if x <= m {
            if m == a {
                0.0
            } else {
                (x - a) * (x - a) / ((b - a) * (m - a))
            }
        } else {
            1.0 - (b - x) * (b - x) / ((b - a) * (b - m))
        }
    }

    /// Mass of `[lo, hi]` intersected with the support.
    pub fn interval_mass(&self, lo: f64, hi: f64) -> f64 {
        if self.high == self.low {
            return if lo <= self.low && self.low <= hi {
                1.0
            } else {
                0.0
            };
        }
        let lo = lo.max(self.low);
        let hi = hi.min(self.high);
        if lo > hi {
            return 0.0;
        }
        (self.cdf(hi) - self.cdf(lo)).max(0.0)
    }

    /// Inverse-CDF transform of a uniform draw `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let (a, b, m) = (self.low, self.high, self.mode);
        if b == a {
            return a;
        }
        let split = (m - a) / (b - a);
        if u < split {
            a + (u * (b - a) * (m - a)).sqrt()
        } else {
            b - ((1.0 - u) * (b - a) * (b - m)).sqrt()
        }
    }
}

/// Product of independent triangular laws, one per noise dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseModel {
    dims: Vec<Triangular>,
}

impl NoiseModel {
    pub fn new(dims: Vec<Triangular>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::input("noise model needs at least one dimension"));
        }
        Ok(Self { dims })
    }

    /// Symmetric triangular on `[-half_width, half_width]` in each of `dim` dimensions.
    pub fn symmetric(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![Triangular::symmetric(-half_width, half_width)?; dim])
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[Triangular] {
        &self.dims
    }

    pub fn support(&self) -> Aabb {
        Aabb::new(
            self.dims.iter().map(|t| t.low).collect(),
            self.dims.iter().map(|t| t.high).collect(),
        )
        .expect("triangular supports are valid intervals")
    }

    /// Probability mass of `cell`; parts outside the support carry no mass.
    pub fn cell_probability(&self, cell: &Aabb) -> Result<f64> {
        check_dim("noise cell", self.dim(), cell.dim())?;
        Ok(self
            .dims
            .iter()
            .enumerate()
            .map(|(i, t)| t.interval_mass(cell.lower()[i], cell.upper()[i]))
            .product())
    }

    /// Uniform grid of `cells_per_dim^p` cells over the support with their masses.
    pub fn partition(&self, cells_per_dim: usize) -> Result<Vec<(Aabb, f64)>> {
        if cells_per_dim == 0 {
            return Err(Error::input("cells_per_dim must be at least 1"));
        }
        let support = self.support();
        let cells = support.grid(cells_per_dim);
        // Per-dimension masses from telescoping CDF differences.
        let masses: Vec<Vec<f64>> = self
            .dims
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let lo = support.lower()[i];
                let w = support.width(i);
                if w == 0.0 {
                    let mut m = vec![0.0; cells_per_dim];
                    m[0] = 1.0;
                    return m;
                }
                let edge = |k: usize| {
                    if k == cells_per_dim {
                        t.high
                    } else {
                        lo + w * k as f64 / cells_per_dim as f64
                    }
                };
                (0..cells_per_dim)
                    .map(|k| t.cdf(edge(k + 1)) - t.cdf(edge(k)))
                    .collect()
            })
            .collect();
        let n = self.dim();
        let mut idx = vec![0usize; n];
        let mut out = Vec::with_capacity(cells.len());
        for cell in cells {
            let p: f64 = (0..n).map(|i| masses[i][idx[i]]).product();
            out.push((cell, p));
            for slot in idx.iter_mut() {
                *slot += 1;
                if *slot < cells_per_dim {
                    break;
                }
                *slot = 0;
            }
        }
        Ok(out)
    }

    /// Draw one disturbance from uniforms `u` (one per dimension).
    pub fn sample_with(&self, u: &[f64], out: &mut [f64]) {
        for ((o, t), ui) in out.iter_mut().zip(&self.dims).zip(u) {
            *o = t.quantile(*ui);
        }
    }
}
