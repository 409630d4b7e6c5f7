//! Interval images of policies and dynamics over boxes.

use serde::{Deserialize, Serialize};

use crate::bounds::FeedForwardNetwork;
use crate::error::{check_dim, Error, Result};
use crate::model::{Aabb, DynamicsSpec, StochasticSystem};

/// Feedback law `π: X → U`. Outputs are clipped to the input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicySpec {
    Network(FeedForwardNetwork),
    /// `u = gain * (goal - x)`.
    Proportional {
        gain: f64,
        goal: Vec<f64>,
    },
}

impl PolicySpec {
    pub fn proportional(gain: f64, goal: Vec<f64>) -> Self {
        PolicySpec::Proportional { gain, goal }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            PolicySpec::Network(net) => net.input_dim(),
            PolicySpec::Proportional { goal, .. } => goal.len(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            PolicySpec::Network(net) => net.output_dim(),
            PolicySpec::Proportional { goal, .. } => goal.len(),
        }
    }

    /// Checks the policy maps the system's states to its inputs.
    pub fn validate_for(&self, sys: &StochasticSystem) -> Result<()> {
        check_dim("policy input", sys.state_dim(), self.input_dim())?;
        check_dim("policy output", sys.input_space.dim(), self.output_dim())?;
        if let PolicySpec::Proportional { gain, .. } = self {
            if !gain.is_finite() {
                return Err(Error::input("policy gain must be finite"));
            }
        }
        Ok(())
    }

    /// `clip_U(π(x))` written into `out`; dimensions are trusted.
    pub fn act(&self, x: &[f64], input_space: &Aabb, out: &mut [f64]) {
        match self {
            PolicySpec::Network(net) => {
                let u = net.evaluate(x).expect("policy dimensions validated");
                out.copy_from_slice(&u);
            }
            PolicySpec::Proportional { gain, goal } => {
                for i in 0..out.len() {
                    out[i] = gain * (goal[i] - x[i]);
                }
            }
        }
        input_space.clamp(out);
    }

    pub fn action(&self, x: &[f64], input_space: &Aabb) -> Result<Vec<f64>> {
        check_dim("policy state", self.input_dim(), x.len())?;
        check_dim("policy input space", self.output_dim(), input_space.dim())?;
        let mut u = vec![0.0; self.output_dim()];
        self.act(x, input_space, &mut u);
        Ok(u)
    }
}

/// Sound enclosure of `{ clip_U(π(x)) : x ∈ state_box }`.
pub fn policy_image(policy: &PolicySpec, state_box: &Aabb, input_space: &Aabb) -> Result<Aabb> {
    check_dim("policy state box", policy.input_dim(), state_box.dim())?;
    check_dim("policy input space", policy.output_dim(), input_space.dim())?;
    let (mut lo, mut hi) = match policy {
        PolicySpec::Network(net) => {
            let out = net.propagate_box(state_box)?;
            (
                out.iter().map(|i| i.lo).collect::<Vec<_>>(),
                out.iter().map(|i| i.hi).collect::<Vec<_>>(),
            )
        }
        PolicySpec::Proportional { gain, goal } => {
            let mut lo = Vec::with_capacity(goal.len());
            let mut hi = Vec::with_capacity(goal.len());
            for (i, g) in goal.iter().enumerate() {
                // gain * (goal - x) is monotone in x; rounding preserves order.
                let a = gain * (g - state_box.upper()[i]);
                let b = gain * (g - state_box.lower()[i]);
                lo.push(a.min(b));
                hi.push(a.max(b));
            }
            (lo, hi)
        }
    };
    input_space.clamp(&mut lo);
    input_space.clamp(&mut hi);
    Aabb::new(lo, hi)
}

/// Sound enclosure of `{ f(x, u, w) : x ∈ state_box, u ∈ input_box, w ∈ noise_box }`.
///
/// Exact for saturated-affine dynamics. For absorbing wrappers the result is
/// `state_box` when the box lies in one absorbing box, the hull of the inner
/// image and `state_box` when it only touches the absorbing region.
pub fn dynamics_image(
    sys: &StochasticSystem,
    state_box: &Aabb,
    input_box: &Aabb,
    noise_box: &Aabb,
) -> Result<Aabb> {
    check_dim("dynamics state box", sys.state_dim(), state_box.dim())?;
    check_dim("dynamics input box", sys.input_space.dim(), input_box.dim())?;
    check_dim("dynamics noise box", sys.noise.dim(), noise_box.dim())?;
    Ok(image(
        &sys.dynamics,
        &sys.state_space,
        state_box,
        input_box,
        noise_box,
    ))
}

pub(crate) fn image(
    dynamics: &DynamicsSpec,
    space: &Aabb,
    state_box: &Aabb,
    input_box: &Aabb,
    noise_box: &Aabb,
) -> Aabb {
    match dynamics {
        DynamicsSpec::SaturatedAffine { step, u_clip } => {
            let n = state_box.dim();
            let mut lo = Vec::with_capacity(n);
            let mut hi = Vec::with_capacity(n);
            for i in 0..n {
                let ua = step * input_box.lower()[i].clamp(u_clip[0], u_clip[1]);
                let ub = step * input_box.upper()[i].clamp(u_clip[0], u_clip[1]);
                let (su, sv) = if ua <= ub { (ua, ub) } else { (ub, ua) };
                let l = state_box.lower()[i] + su + noise_box.lower()[i];
                let h = state_box.upper()[i] + sv + noise_box.upper()[i];
                lo.push(l.clamp(space.lower()[i], space.upper()[i]));
                hi.push(h.clamp(space.lower()[i], space.upper()[i]));
            }
            Aabb::new(lo, hi).expect("monotone image of a valid box")
        }
        DynamicsSpec::Absorbing { region, inner } => {
            if region.covers_box(state_box) {
                state_box.clone()
            } else if region.intersects_box(state_box) {
                image(inner, space, state_box, input_box, noise_box).hull(state_box)
            } else {
                image(inner, space, state_box, input_box, noise_box)
            }
        }
    }
}
