//! Dense feed-forward networks with exact forward passes and interval bound
//! propagation (IBP).
//!
//! Affine layers track the exact rounding error of every product and sum
//! (fma plus two-sum) and widen endpoints only by what was actually lost, so
//! exactly representable computations are not widened at all. Smooth
//! activations widen by a few ulps.

use serde::{Deserialize, Serialize};

use crate::bounds::Interval;
use crate::error::{check_dim, Error, Result};
use crate::model::Aabb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Softplus,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Softplus => softplus(z),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative with respect to the pre-activation.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(z),
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    /// Endpoint-wise image of a monotone activation.
    #[inline]
    fn apply_interval(self, lo: f64, hi: f64) -> (f64, f64) {
        match self {
            Activation::Identity => (lo, hi),
            Activation::Relu => (lo.max(0.0), hi.max(0.0)),
            Activation::Softplus | Activation::Tanh => {
                let (a, b) = (self.apply(lo), self.apply(hi));
                (
                    a - 4.0 * f64::EPSILON * a.abs() - f64::MIN_POSITIVE,
                    b + 4.0 * f64::EPSILON * b.abs() + f64::MIN_POSITIVE,
                )
            }
        }
    }

    fn is_nonnegative(self) -> bool {
        matches!(self, Activation::Relu | Activation::Softplus)
    }
}

#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One affine map followed by an activation. Weights are row-major
/// `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    pub(crate) in_dim: usize,
    pub(crate) activation: Activation,
}

impl Layer {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let out_dim = bias.len();
        if out_dim == 0 {
            return Err(Error::input("layer must have at least one output"));
        }
        check_dim("layer weight rows", out_dim, weights.len())?;
        let in_dim = weights[0].len();
        if in_dim == 0 {
            return Err(Error::input("layer must have at least one input"));
        }
        let mut flat = Vec::with_capacity(out_dim * in_dim);
        for row in &weights {
            check_dim("layer weight columns", in_dim, row.len())?;
            flat.extend_from_slice(row);
        }
        if flat.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::input("layer parameters must be finite"));
        }
        Ok(Self {
            weights: flat,
            bias,
            in_dim,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.in_dim + col]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Pre-activations `W x + b`.
    #[inline]
    pub(crate) fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.in_dim).zip(&self.bias) {
            let mut acc = *b;
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            out.push(acc);
        }
    }

    fn affine_interval(
        &self,
        lo: &[f64],
        hi: &[f64],
        out_lo: &mut Vec<f64>,
        out_hi: &mut Vec<f64>,
    ) {
        out_lo.clear();
        out_hi.clear();
        // Each lower/upper sum tracks the exact rounding error of every product
        // and addition, so exact arithmetic adds no widening at all.
        let grow = 1.0 + (2.0 * self.in_dim as f64 + 4.0) * f64::EPSILON;
        for (row, b) in self.weights.chunks_exact(self.in_dim).zip(&self.bias) {
            let mut l = ExactSum::new(*b);
            let mut h = ExactSum::new(*b);
            for ((w, a), z) in row.iter().zip(lo).zip(hi) {
                let (for_lo, for_hi) = if *w >= 0.0 { (a, z) } else { (z, a) };
                l.add_product(*w, *for_lo);
                h.add_product(*w, *for_hi);
            }
            out_lo.push(if l.err == 0.0 {
                l.sum
            } else {
                (l.sum - l.err * grow).next_down()
            });
            out_hi.push(if h.err == 0.0 {
                h.sum
            } else {
                (h.sum + h.err * grow).next_up()
            });
        }
    }
}

/// Running float sum with an upper bound on its accumulated absolute error.
struct ExactSum {
    sum: f64,
    err: f64,
}

impl ExactSum {
    #[inline]
    fn new(start: f64) -> Self {
        Self {
            sum: start,
            err: 0.0,
        }
    }

    #[inline]
    fn add_product(&mut self, w: f64, x: f64) {
        let p = w * x;
        let p_err = w.mul_add(x, -p);
        let s = self.sum + p;
        let bb = s - self.sum;
        let s_err = (self.sum - (s - bb)) + (p - bb);
        self.sum = s;
        self.err += p_err.abs() + s_err.abs();
    }
}

#[derive(Serialize, Deserialize)]
struct RawLayer {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Serialize for Layer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawLayer {
            weights: self
                .weights
                .chunks_exact(self.in_dim)
                .map(<[f64]>::to_vec)
                .collect(),
            bias: self.bias.clone(),
            activation: self.activation,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Layer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = RawLayer::deserialize(d)?;
        Layer::new(raw.weights, raw.bias, raw.activation).map_err(serde::de::Error::custom)
    }
}

/// Layered affine + activation network, used for certificates and policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork")]
pub struct FeedForwardNetwork {
    layers: Vec<Layer>,
}

#[derive(Deserialize)]
struct RawNetwork {
    layers: Vec<Layer>,
}

impl TryFrom<RawNetwork> for FeedForwardNetwork {
    type Error = Error;

    fn try_from(raw: RawNetwork) -> Result<Self> {
        FeedForwardNetwork::new(raw.layers)
    }
}

impl FeedForwardNetwork {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::input("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            check_dim("layer chaining", pair[0].out_dim(), pair[1].in_dim())?;
        }
        Ok(Self { layers })
    }

    /// Network computing the constant `c` on `input_dim` inputs.
    pub fn constant(input_dim: usize, c: f64) -> Result<Self> {
        Self::new(vec![Layer::new(
            vec![vec![0.0; input_dim]],
            vec![c],
            Activation::Identity,
        )?])
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Layer::out_dim).unwrap_or(0)
    }

    /// Whether the output head guarantees `C(x) >= 0` everywhere.
    pub fn has_nonnegative_head(&self) -> bool {
        self.layers
            .last()
            .map(|l| l.activation.is_nonnegative())
            .unwrap_or(false)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("network input", self.input_dim(), x.len())?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.affine(&cur, &mut next);
            for z in next.iter_mut() {
                *z = layer.activation.apply(*z);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// First output at `x`, without dimension checks.
    pub(crate) fn eval_scalar(&self, x: &[f64]) -> f64 {
        let mut cur: Vec<f64> = x.to_vec();
        let mut next = Vec::with_capacity(16);
        for layer in &self.layers {
            layer.affine(&cur, &mut next);
            for z in next.iter_mut() {
                *z = layer.activation.apply(*z);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur[0]
    }

    /// Sound per-output enclosures over `cell`.
    pub fn propagate_box(&self, cell: &Aabb) -> Result<Vec<Interval>> {
        check_dim("network input box", self.input_dim(), cell.dim())?;
        let (lo, hi) = self.propagate_raw(cell.lower(), cell.upper());
        Ok(lo
            .into_iter()
            .zip(hi)
            .map(|(l, h)| Interval::new(l, h))
            .collect())
    }

    /// Enclosure of the first output over `[lo, hi]`, without dimension checks.
    pub(crate) fn bound_scalar(&self, lo: &[f64], hi: &[f64]) -> Interval {
        let (l, h) = self.propagate_raw(lo, hi);
        Interval::new(l[0], h[0])
    }

    fn propagate_raw(&self, lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut cur_lo = lo.to_vec();
        let mut cur_hi = hi.to_vec();
        let mut next_lo = Vec::with_capacity(16);
        let mut next_hi = Vec::with_capacity(16);
        for layer in &self.layers {
            layer.affine_interval(&cur_lo, &cur_hi, &mut next_lo, &mut next_hi);
            for (l, h) in next_lo.iter_mut().zip(next_hi.iter_mut()) {
                let (a, b) = layer.activation.apply_interval(*l, *h);
                *l = a;
                *h = b;
            }
            std::mem::swap(&mut cur_lo, &mut next_lo);
            std::mem::swap(&mut cur_hi, &mut next_hi);
        }
        (cur_lo, cur_hi)
    }
}
