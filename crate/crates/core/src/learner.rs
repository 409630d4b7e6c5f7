//! Counterexample-guided synthesis of certificate networks.
//!
//! Training minimises a hinge surrogate of the three certificate conditions
//! on sampled states, with the expectation replaced by a mean over sampled
//! noise. Each round ends with a sound verification; counterexample cells are
//! sampled back into the training set and the loop repeats.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{
    dynamics_image_unchecked, policy_image, Activation, FeedForwardNetwork, Layer, PolicySpec,
};
use crate::error::{check_dim, Error, Result};
use crate::model::{safety_level, Aabb, ReachAvoidSpec, Region, StochasticSystem};
use crate::verifier::{verify_certificate, Verdict, VerificationConfig, VerificationReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_sizes: Vec<usize>,
    /// Passes over the training set per round.
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Uniform state samples drawn before the first round.
    pub sample_count: usize,
    /// Share of each batch taken from counterexample samples.
    pub counterexample_fraction: f64,
    pub noise_samples_per_state: usize,
    pub max_cegis_rounds: usize,
    /// Samples drawn inside every reported counterexample cell.
    pub samples_per_counterexample: usize,
    pub seed: u64,
    pub margins: LossMargins,
    /// Weight of the interval term, which scores the same conditions with
    /// interval bounds over a box around each sample. Zero disables it.
    pub interval_weight: f64,
    /// Half-widths of those boxes. Empty means half the finest cell the
    /// verifier can reach.
    pub interval_radius: Vec<f64>,
    pub verification: VerificationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![16, 16],
            epochs: 25,
            batch_size: 256,
            learning_rate: 3e-3,
            sample_count: 4096,
            counterexample_fraction: 0.25,
            noise_samples_per_state: 8,
            max_cegis_rounds: 10,
            samples_per_counterexample: 4,
            seed: 0,
            margins: LossMargins::default(),
            interval_weight: 1.0,
            interval_radius: Vec::new(),
            verification: VerificationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("sample_count", self.sample_count),
            ("noise_samples_per_state", self.noise_samples_per_state),
            ("max_cegis_rounds", self.max_cegis_rounds),
            (
                "samples_per_counterexample",
                self.samples_per_counterexample,
            ),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::input(format!("{name} must be positive")));
            }
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::input("hidden layer sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&self.counterexample_fraction) {
            return Err(Error::input("counterexample_fraction must lie in [0, 1]"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::input("learning_rate must be positive"));
        }
        if !(self.interval_weight >= 0.0) || !self.interval_weight.is_finite() {
            return Err(Error::input("interval_weight must be non-negative"));
        }
        if self
            .interval_radius
            .iter()
            .any(|r| !(*r > 0.0) || !r.is_finite())
        {
            return Err(Error::input("interval_radius entries must be positive"));
        }
        self.margins.validate()?;
        self.verification.validate()
    }

    /// Box half-widths for the interval term over `space`.
    fn radius_for(&self, space: &Aabb) -> Result<Vec<f64>> {
        if self.interval_weight == 0.0 {
            return Ok(Vec::new());
        }
        if !self.interval_radius.is_empty() {
            check_dim("interval_radius", space.dim(), self.interval_radius.len())?;
            return Ok(self.interval_radius.clone());
        }
        let v = &self.verification;
        let splits = v.max_refine_depth / space.dim();
        let per_dim = v.initial_cells_per_dim as f64 * 2f64.powi(splits as i32);
        Ok((0..space.dim())
            .map(|i| 0.5 * space.width(i) / per_dim)
            .collect())
    }
}

/// Margins the surrogate demands on top of the exact conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossMargins {
    /// Required sampled decrease.
    pub epsilon: f64,
    /// Initial states must satisfy `C ≤ 1 - initial`.
    pub initial: f64,
    /// Unsafe states, and states excused from decreasing, need
    /// `C ≥ 1/(1-ρ) + safety`.
    pub safety: f64,
    /// Required decrease between interval bounds in the interval term.
    pub interval_epsilon: f64,
}

impl Default for LossMargins {
    fn default() -> Self {
        Self {
            epsilon: 0.02,
            initial: 0.05,
            safety: 0.1,
            interval_epsilon: 0.005,
        }
    }
}

impl LossMargins {
    /// No margin beyond the decrease `epsilon`.
    pub fn exact(epsilon: f64) -> Self {
        Self {
            epsilon,
            initial: 0.0,
            safety: 0.0,
            interval_epsilon: epsilon,
        }
    }

    fn validate(&self) -> Result<()> {
        if [
            self.epsilon,
            self.initial,
            self.safety,
            self.interval_epsilon,
        ]
        .iter()
        .any(|m| !m.is_finite() || *m < 0.0)
        {
            return Err(Error::input("loss margins must be finite and non-negative"));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub loss: f64,
    pub verdict: Verdict,
    pub counterexamples: usize,
    /// Samples added to the training set from this round's counterexamples.
    pub injected: usize,
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub certificate: FeedForwardNetwork,
    pub report: VerificationReport,
    pub log: Vec<RoundLog>,
}

/// A training state with its region memberships and sampled successors.
struct Sample {
    x: Vec<f64>,
    initial: bool,
    unsafe_: bool,
    decrease: bool,
    next: Vec<Vec<f64>>,
    /// Box around `x` and an enclosure of its successors, for the interval term.
    boxed: Option<BoxedSample>,
}

struct BoxedSample {
    cell: Aabb,
    image: Aabb,
    decrease: bool,
}

struct Setting<'a> {
    sys: &'a StochasticSystem,
    policy: &'a PolicySpec,
    spec: &'a ReachAvoidSpec,
    level: f64,
    margins: LossMargins,
    /// Half-widths of the interval-term boxes; empty disables the term.
    radius: Vec<f64>,
    interval_weight: f64,
}

impl Setting<'_> {
    fn sample(&self, x: Vec<f64>, noise: &[Vec<f64>]) -> Sample {
        let mut u = vec![0.0; self.sys.input_space.dim()];
        self.policy.act(&x, &self.sys.input_space, &mut u);
        let next = noise
            .iter()
            .map(|w| {
                let mut out = vec![0.0; x.len()];
                self.sys.successor(&x, &u, w, &mut out);
                out
            })
            .collect();
        let boxed = (!self.radius.is_empty()).then(|| {
            let space = &self.sys.state_space;
            let lower = (0..x.len())
                .map(|i| (x[i] - self.radius[i]).max(space.lower()[i]))
                .collect();
            let upper = (0..x.len())
                .map(|i| (x[i] + self.radius[i]).min(space.upper()[i]))
                .collect();
            let cell = Aabb::new(lower, upper).expect("box around a state in the space");
            let ubox =
                policy_image(self.policy, &cell, &self.sys.input_space).expect("validated policy");
            let image = dynamics_image_unchecked(
                &self.sys.dynamics,
                space,
                &cell,
                &ubox,
                &self.sys.noise.support(),
            );
            BoxedSample {
                decrease: !self.spec.target.covers_box(&cell),
                cell,
                image,
            }
        });
        Sample {
            initial: self.spec.initial.contains_point(&x),
            unsafe_: self.spec.unsafe_set.contains_point(&x),
            decrease: !self.spec.target.contains_point(&x),
            x,
            next,
            boxed,
        }
    }

    fn fresh_sample(&self, x: Vec<f64>, noise_draws: usize, rng: &mut ChaCha8Rng) -> Sample {
        let mut unit = vec![0.0; self.sys.noise.dim()];
        let noise: Vec<Vec<f64>> = (0..noise_draws)
            .map(|_| {
                unit.iter_mut().for_each(|t| *t = rng.random::<f64>());
                let mut w = vec![0.0; unit.len()];
                self.sys.noise.sample_with(&unit, &mut w);
                w
            })
            .collect();
        self.sample(x, &noise)
    }
}

/// Forward activations kept for backpropagation.
struct Tape {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Tape {
    fn new(net: &FeedForwardNetwork) -> Self {
        let mut acts = vec![vec![0.0; net.input_dim()]];
        let mut pre = Vec::new();
        for l in net.layers() {
            acts.push(vec![0.0; l.out_dim()]);
            pre.push(vec![0.0; l.out_dim()]);
        }
        Self { acts, pre }
    }

    fn forward(&mut self, net: &FeedForwardNetwork, x: &[f64]) -> f64 {
        self.acts[0].copy_from_slice(x);
        for (k, layer) in net.layers().iter().enumerate() {
            let (done, rest) = self.acts.split_at_mut(k + 1);
            let input = &done[k];
            for (j, row) in layer.weights.chunks_exact(layer.in_dim).enumerate() {
                let z = layer.bias[j] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
                self.pre[k][j] = z;
                rest[0][j] = layer.activation.apply(z);
            }
        }
        self.acts.last().expect("at least one layer")[0]
    }

    /// Accumulate `scale · ∂C/∂θ` for the last forward pass into `grads`.
    fn backward(
        &self,
        net: &FeedForwardNetwork,
        scale: f64,
        grads: &mut [LayerGrad],
        delta: &mut Vec<f64>,
        carry: &mut Vec<f64>,
    ) {
        delta.clear();
        delta.push(scale);
        for (k, layer) in net.layers().iter().enumerate().rev() {
            for (d, z) in delta.iter_mut().zip(&self.pre[k]) {
                *d *= layer.activation.derivative(*z);
            }
            let input = &self.acts[k];
            let g = &mut grads[k];
            carry.clear();
            carry.resize(layer.in_dim, 0.0);
            for (j, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                g.bias[j] += d;
                let row = &layer.weights[j * layer.in_dim..(j + 1) * layer.in_dim];
                let grow = &mut g.weights[j * layer.in_dim..(j + 1) * layer.in_dim];
                for i in 0..layer.in_dim {
                    grow[i] += d * input[i];
                    carry[i] += d * row[i];
                }
            }
            std::mem::swap(delta, carry);
        }
    }
}

/// Interval forward pass kept for backpropagation. Rounding is ignored here;
/// only the verifier needs sound bounds.
struct IntervalTape {
    lo: Vec<Vec<f64>>,
    hi: Vec<Vec<f64>>,
    pre_lo: Vec<Vec<f64>>,
    pre_hi: Vec<Vec<f64>>,
}

impl IntervalTape {
    fn new(net: &FeedForwardNetwork) -> Self {
        let mut lo = vec![vec![0.0; net.input_dim()]];
        let mut pre_lo = Vec::new();
        for l in net.layers() {
            lo.push(vec![0.0; l.out_dim()]);
            pre_lo.push(vec![0.0; l.out_dim()]);
        }
        Self {
            hi: lo.clone(),
            pre_hi: pre_lo.clone(),
            lo,
            pre_lo,
        }
    }

    fn forward(&mut self, net: &FeedForwardNetwork, cell: &Aabb) -> (f64, f64) {
        self.lo[0].copy_from_slice(cell.lower());
        self.hi[0].copy_from_slice(cell.upper());
        for (k, layer) in net.layers().iter().enumerate() {
            for (j, row) in layer.weights.chunks_exact(layer.in_dim).enumerate() {
                let (mut l, mut h) = (layer.bias[j], layer.bias[j]);
                for (i, w) in row.iter().enumerate() {
                    let (a, b) = (self.lo[k][i], self.hi[k][i]);
                    if *w >= 0.0 {
                        l += w * a;
                        h += w * b;
                    } else {
                        l += w * b;
                        h += w * a;
                    }
                }
                self.pre_lo[k][j] = l;
                self.pre_hi[k][j] = h;
                self.lo[k + 1][j] = layer.activation.apply(l);
                self.hi[k + 1][j] = layer.activation.apply(h);
            }
        }
        (
            self.lo.last().expect("layers")[0],
            self.hi.last().expect("layers")[0],
        )
    }

    /// Accumulate the gradient of `g_lo · lower + g_hi · upper`.
    fn backward(&self, net: &FeedForwardNetwork, g_lo: f64, g_hi: f64, grads: &mut [LayerGrad]) {
        let mut dl = vec![g_lo];
        let mut dh = vec![g_hi];
        for (k, layer) in net.layers().iter().enumerate().rev() {
            for j in 0..dl.len() {
                dl[j] *= layer.activation.derivative(self.pre_lo[k][j]);
                dh[j] *= layer.activation.derivative(self.pre_hi[k][j]);
            }
            let (lo, hi) = (&self.lo[k], &self.hi[k]);
            let mut cl = vec![0.0; layer.in_dim];
            let mut ch = vec![0.0; layer.in_dim];
            let g = &mut grads[k];
            for j in 0..dl.len() {
                let (a, b) = (dl[j], dh[j]);
                if a == 0.0 && b == 0.0 {
                    continue;
                }
                g.bias[j] += a + b;
                for i in 0..layer.in_dim {
                    let w = layer.weights[j * layer.in_dim + i];
                    if w >= 0.0 {
                        g.weights[j * layer.in_dim + i] += a * lo[i] + b * hi[i];
                        cl[i] += w * a;
                        ch[i] += w * b;
                    } else {
                        g.weights[j * layer.in_dim + i] += a * hi[i] + b * lo[i];
                        cl[i] += w * b;
                        ch[i] += w * a;
                    }
                }
            }
            dl = cl;
            dh = ch;
        }
    }
}

#[derive(Clone)]
struct LayerGrad {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LayerGrad {
    fn zeros_like(net: &FeedForwardNetwork) -> Vec<Self> {
        net.layers()
            .iter()
            .map(|l| Self {
                weights: vec![0.0; l.weights.len()],
                bias: vec![0.0; l.bias.len()],
            })
            .collect()
    }

    fn clear(grads: &mut [Self]) {
        for g in grads {
            g.weights.iter_mut().for_each(|v| *v = 0.0);
            g.bias.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Per-sample hinge terms and how each feeds the gradient.
#[derive(Default)]
struct Terms {
    initial: f64,
    safety: f64,
    decrease: f64,
}

/// Loss over `batch`; when `grads` is given, also accumulates its gradient.
fn batch_loss(
    net: &FeedForwardNetwork,
    setting: &Setting,
    batch: &[&Sample],
    mut grads: Option<&mut [LayerGrad]>,
    tapes: &mut (Tape, IntervalTape),
) -> f64 {
    let (tape, itape) = tapes;
    let n_init = batch.iter().filter(|s| s.initial).count();
    let n_unsafe = batch.iter().filter(|s| s.unsafe_).count();
    let n_dec = batch.iter().filter(|s| s.decrease).count();
    let m = setting.margins;
    let high = setting.level + m.safety;
    let mut sums = Terms::default();
    let mut interval = Terms::default();
    let n_box_dec = batch
        .iter()
        .filter(|s| s.boxed.as_ref().is_some_and(|b| b.decrease))
        .count();
    let lambda = setting.interval_weight;
    let (mut delta, mut carry) = (Vec::new(), Vec::new());

    for s in batch {
        let c = tape.forward(net, &s.x);
        let mut coef = 0.0;
        if s.initial {
            let h = c - (1.0 - m.initial);
            if h > 0.0 {
                sums.initial += h;
                coef += 1.0 / n_init as f64;
            }
        }
        if s.unsafe_ {
            let h = high - c;
            if h > 0.0 {
                sums.safety += h;
                coef -= 1.0 / n_unsafe as f64;
            }
        }
        let mut through_next = false;
        if s.decrease && c < high {
            let level_gap = high - c;
            let mean_next =
                s.next.iter().map(|y| net.eval_scalar(y)).sum::<f64>() / s.next.len() as f64;
            let dec_gap = m.epsilon + mean_next - c;
            if dec_gap > 0.0 {
                // The condition holds if either branch does; push on the cheaper one.
                let h = dec_gap.min(level_gap);
                sums.decrease += h;
                coef -= 1.0 / n_dec as f64;
                through_next = dec_gap < level_gap;
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            if coef != 0.0 {
                tape.backward(net, coef, g, &mut delta, &mut carry);
            }
            if through_next {
                let w = 1.0 / (n_dec as f64 * s.next.len() as f64);
                for y in &s.next {
                    tape.forward(net, y);
                    tape.backward(net, w, g, &mut delta, &mut carry);
                }
            }
        }

        let Some(b) = s.boxed.as_ref().filter(|_| lambda > 0.0) else {
            continue;
        };
        let (lo, hi) = itape.forward(net, &b.cell);
        let (mut g_lo, mut g_hi) = (0.0, 0.0);
        if s.initial && hi > 1.0 - m.initial {
            interval.initial += hi - (1.0 - m.initial);
            g_hi += lambda / n_init as f64;
        }
        if s.unsafe_ && lo < high {
            interval.safety += high - lo;
            g_lo -= lambda / n_unsafe as f64;
        }
        let mut image_hi_coef = 0.0;
        let mut image_hi = f64::NEG_INFINITY;
        if b.decrease && lo < high {
            image_hi = itape.forward(net, &b.image).1;
            let dec_gap = m.interval_epsilon + image_hi - lo;
            if dec_gap > 0.0 {
                interval.decrease += dec_gap.min(high - lo);
                g_lo -= lambda / n_box_dec as f64;
                if dec_gap < high - lo {
                    image_hi_coef = lambda / n_box_dec as f64;
                }
            }
        }
        if let Some(g) = grads.as_deref_mut() {
            if image_hi_coef != 0.0 {
                // The tape still holds the image pass.
                itape.backward(net, 0.0, image_hi_coef, g);
            }
            if g_lo != 0.0 || g_hi != 0.0 {
                if image_hi.is_finite() {
                    itape.forward(net, &b.cell);
                }
                itape.backward(net, g_lo, g_hi, g);
            }
        }
    }
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    mean(sums.initial, n_init)
        + mean(sums.safety, n_unsafe)
        + mean(sums.decrease, n_dec)
        + lambda
            * (mean(interval.initial, n_init)
                + mean(interval.safety, n_unsafe)
                + mean(interval.decrease, n_box_dec))
}

fn validate_setting(
    cert_dims: Option<(usize, usize)>,
    sys: &StochasticSystem,
    policy: &PolicySpec,
    spec: &ReachAvoidSpec,
) -> Result<f64> {
    if let Some((input, output)) = cert_dims {
        check_dim("certificate input", sys.state_dim(), input)?;
        check_dim("certificate output", 1, output)?;
    }
    policy.validate_for(sys)?;
    spec.validate(&sys.state_space)?;
    safety_level(spec.rho)
}

/// Surrogate loss of `cert` on `states`, with the expectation over the next
/// state replaced by the mean over `noise_draws`.
pub fn certificate_loss(
    cert: &FeedForwardNetwork,
    sys: &StochasticSystem,
    policy: &PolicySpec,
    spec: &ReachAvoidSpec,
    states: &[Vec<f64>],
    noise_draws: &[Vec<f64>],
    margins: &LossMargins,
) -> Result<f64> {
    let level = validate_setting(
        Some((cert.input_dim(), cert.output_dim())),
        sys,
        policy,
        spec,
    )?;
    margins.validate()?;
    if noise_draws.is_empty() {
        return Err(Error::input("at least one noise draw is required"));
    }
    for w in noise_draws {
        check_dim("noise draw", sys.noise.dim(), w.len())?;
    }
    for x in states {
        check_dim("state", sys.state_dim(), x.len())?;
        if !sys.state_space.contains(x) {
            return Err(Error::input("loss states must lie in the state space"));
        }
    }
    let setting = Setting {
        sys,
        policy,
        spec,
        level,
        margins: *margins,
        radius: Vec::new(),
        interval_weight: 0.0,
    };
    let samples: Vec<Sample> = states
        .iter()
        .map(|x| setting.sample(x.clone(), noise_draws))
        .collect();
    let batch: Vec<&Sample> = samples.iter().collect();
    Ok(batch_loss(cert, &setting, &batch, None, &mut tapes(cert)))
}

fn tapes(net: &FeedForwardNetwork) -> (Tape, IntervalTape) {
    (Tape::new(net), IntervalTape::new(net))
}

/// Uniform point in `region`, picking boxes by volume.
fn sample_region(region: &Region, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let total = region.total_volume();
    let mut pick = rng.random::<f64>() * total;
    let mut chosen = &region.boxes()[0];
    for b in region.boxes() {
        chosen = b;
        pick -= b.volume();
        if pick <= 0.0 {
            break;
        }
    }
    sample_box(chosen, rng)
}

fn sample_box(b: &Aabb, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let t: Vec<f64> = (0..b.dim()).map(|_| rng.random::<f64>()).collect();
    b.lerp(&t)
}

/// He-style initialisation with the first layer rescaled to the state box.
fn initial_network(
    space: &Aabb,
    hidden: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<FeedForwardNetwork> {
    let dim = space.dim();
    let mut sizes = vec![dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    let mut layers = Vec::new();
    for (k, pair) in sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let bound = (6.0 / fan_in as f64).sqrt();
        let mut weights: Vec<Vec<f64>> = (0..fan_out)
            .map(|_| {
                (0..fan_in)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect()
            })
            .collect();
        let mut bias: Vec<f64> = (0..fan_out).map(|_| rng.random_range(-0.1..0.1)).collect();
        if k == 0 {
            // Fold the map from the state box onto [-1, 1]^n into the weights.
            let centre = space.center();
            for (row, b) in weights.iter_mut().zip(bias.iter_mut()) {
                for (i, w) in row.iter_mut().enumerate() {
                    *w /= 0.5 * space.width(i).max(f64::MIN_POSITIVE);
                    *b -= *w * centre[i];
                }
            }
        }
        let last = k + 2 == sizes.len();
        let act = if last {
            Activation::Softplus
        } else {
            Activation::Relu
        };
        layers.push(Layer::new(weights, bias, act)?);
    }
    FeedForwardNetwork::new(layers)
}

struct Adam {
    m: Vec<LayerGrad>,
    v: Vec<LayerGrad>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;

    fn new(net: &FeedForwardNetwork, lr: f64) -> Self {
        Self {
            m: LayerGrad::zeros_like(net),
            v: LayerGrad::zeros_like(net),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, net: &mut FeedForwardNetwork, grads: &[LayerGrad]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        let lr = self.lr;
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + 1e-8);
            }
        };
        for (k, layer) in net.layers_mut().iter_mut().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            update(
                &mut layer.weights,
                &grads[k].weights,
                &mut m.weights,
                &mut v.weights,
            );
            update(&mut layer.bias, &grads[k].bias, &mut m.bias, &mut v.bias);
        }
    }
}

/// Train, verify, and feed counterexamples back until the verifier certifies
/// `spec.rho` or `max_cegis_rounds` runs out.
///
/// Single-threaded training keeps the result a pure function of the inputs
/// and `cfg.seed`.
pub fn synthesize_certificate(
    sys: &StochasticSystem,
    policy: &PolicySpec,
    spec: &ReachAvoidSpec,
    cfg: &TrainConfig,
) -> Result<Synthesis> {
    let out = synthesize_with_log(sys, policy, spec, cfg, |_| {})?;
    if out.report.is_certified() {
        Ok(out)
    } else {
        Err(Error::SynthesisFailed {
            rounds: out.log.len(),
            verdict: out.report.verdict,
        })
    }
}

/// Runs the same loop as [`synthesize_certificate`] and calls `on_round`
/// after each round. An uncertified last candidate is returned as `Ok`, so
/// check `report.verdict`.
pub fn synthesize_with_log(
    sys: &StochasticSystem,
    policy: &PolicySpec,
    spec: &ReachAvoidSpec,
    cfg: &TrainConfig,
    mut on_round: impl FnMut(&RoundLog),
) -> Result<Synthesis> {
    cfg.validate()?;
    let level = validate_setting(None, sys, policy, spec)?;
    if spec.rho > 0.0
        && spec
            .initial
            .boxes()
            .iter()
            .any(|b| spec.unsafe_set.intersects_box(b))
    {
        return Err(Error::input(
            "initial and unsafe sets overlap, so no certificate can exist for rho > 0",
        ));
    }

    let setting = Setting {
        sys,
        policy,
        spec,
        level,
        margins: cfg.margins,
        radius: cfg.radius_for(&sys.state_space)?,
        interval_weight: cfg.interval_weight,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = initial_network(&sys.state_space, &cfg.hidden_sizes, &mut rng)?;

    let mut base = Vec::with_capacity(cfg.sample_count * 3 / 2);
    for _ in 0..cfg.sample_count {
        let x = sample_box(&sys.state_space, &mut rng);
        base.push(setting.fresh_sample(x, cfg.noise_samples_per_state, &mut rng));
    }
    // Small regions would otherwise be missed by uniform sampling.
    for region in [&spec.initial, &spec.unsafe_set] {
        if region.is_empty() {
            continue;
        }
        for _ in 0..cfg.sample_count / 4 {
            let x = sample_region(region, &mut rng);
            base.push(setting.fresh_sample(x, cfg.noise_samples_per_state, &mut rng));
        }
    }
    let mut pool: Vec<Sample> = Vec::new();

    let mut adam = Adam::new(&net, cfg.learning_rate);
    let mut grads = LayerGrad::zeros_like(&net);
    let mut tape = tapes(&net);
    let mut order: Vec<usize> = (0..base.len()).collect();
    let mut log = Vec::new();

    for round in 1..=cfg.max_cegis_rounds {
        let cx_per_batch = if pool.is_empty() {
            0
        } else {
            ((cfg.counterexample_fraction * cfg.batch_size as f64).round() as usize)
                .min(cfg.batch_size - 1)
        };
        let base_per_batch = cfg.batch_size - cx_per_batch;
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(base_per_batch) {
                let mut batch: Vec<&Sample> = chunk.iter().map(|i| &base[*i]).collect();
                for _ in 0..cx_per_batch {
                    batch.push(&pool[rng.random_range(0..pool.len())]);
                }
                LayerGrad::clear(&mut grads);
                batch_loss(&net, &setting, &batch, Some(&mut grads), &mut tape);
                adam.step(&mut net, &grads);
            }
        }
        // Reject diverged parameters before handing them to the verifier.
        let net_checked = FeedForwardNetwork::new(
            net.layers()
                .iter()
                .map(|l| {
                    Layer::new(
                        l.weights
                            .chunks_exact(l.in_dim)
                            .map(<[f64]>::to_vec)
                            .collect(),
                        l.bias.clone(),
                        l.activation,
                    )
                })
                .collect::<Result<Vec<_>>>()?,
        )?;

        let all: Vec<&Sample> = base.iter().chain(pool.iter()).collect();
        let loss = batch_loss(&net_checked, &setting, &all, None, &mut tape);
        let report = verify_certificate(&net_checked, sys, policy, spec, &cfg.verification)?;

        let mut injected = 0;
        if !report.is_certified() {
            for cx in &report.counterexample_cells {
                for _ in 0..cfg.samples_per_counterexample {
                    let x = sample_box(&cx.cell, &mut rng);
                    pool.push(setting.fresh_sample(x, cfg.noise_samples_per_state, &mut rng));
                    injected += 1;
                }
            }
        }
        let entry = RoundLog {
            round,
            loss,
            verdict: report.verdict,
            counterexamples: report.counterexample_cells.len(),
            injected,
        };
        on_round(&entry);
        log.push(entry);
        let done = report.is_certified() || round == cfg.max_cegis_rounds;
        if done {
            return Ok(Synthesis {
                certificate: net_checked,
                report,
                log,
            });
        }
    }
    unreachable!("max_cegis_rounds is positive")
}
