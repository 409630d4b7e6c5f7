use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::{Aabb, NoiseModel, Region};

/// Transition function `f(x, u, w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DynamicsSpec {
    /// `x' = clip_X(x + step * clip(u, u_lo, u_hi) + w)`.
    SaturatedAffine { step: f64, u_clip: [f64; 2] },
    /// Identity inside `region`, `inner` elsewhere.
    Absorbing {
        region: Region,
        inner: Box<DynamicsSpec>,
    },
}

impl DynamicsSpec {
    fn validate(&self) -> Result<()> {
        match self {
            DynamicsSpec::SaturatedAffine { step, u_clip } => {
                if !step.is_finite() {
                    return Err(Error::input("dynamics step must be finite"));
                }
                if !(u_clip[0] <= u_clip[1]) {
                    return Err(Error::input("dynamics u_clip must be an interval [lo, hi]"));
                }
                Ok(())
            }
            DynamicsSpec::Absorbing { inner, .. } => inner.validate(),
        }
    }

    /// Whether `x` is a fixed point for every input and disturbance.
    pub fn absorbs(&self, x: &[f64]) -> bool {
        match self {
            DynamicsSpec::SaturatedAffine { .. } => false,
            DynamicsSpec::Absorbing { region, inner } => {
                region.contains_point(x) || inner.absorbs(x)
            }
        }
    }
}

/// `Σ = (X, U, W, f, μ)` with per-dimension triangular `μ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StochasticSystem {
    pub state_space: Aabb,
    pub input_space: Aabb,
    pub noise_space: Aabb,
    pub dynamics: DynamicsSpec,
    pub noise: NoiseModel,
}

impl StochasticSystem {
    pub fn new(
        state_space: Aabb,
        input_space: Aabb,
        dynamics: DynamicsSpec,
        noise: NoiseModel,
    ) -> Result<Self> {
        dynamics.validate()?;
        let n = state_space.dim();
        check_dim("input space", n, input_space.dim())?;
        check_dim("noise model", n, noise.dim())?;
        let sys = Self {
            state_space,
            input_space,
            noise_space: noise.support(),
            dynamics,
            noise,
        };
        sys.check_absorbing_regions(&sys.dynamics)?;
        Ok(sys)
    }

    fn check_absorbing_regions(&self, d: &DynamicsSpec) -> Result<()> {
        if let DynamicsSpec::Absorbing { region, inner } = d {
            if let Some(rd) = region.dim() {
                check_dim("absorbing region", self.state_dim(), rd)?;
            }
            self.check_absorbing_regions(inner)?;
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.state_space.dim()
    }

    /// Point evaluation of `f`, written into `out`.
    pub fn successor(&self, x: &[f64], u: &[f64], w: &[f64], out: &mut [f64]) {
        Self::apply(&self.dynamics, &self.state_space, x, u, w, out);
    }

    fn apply(d: &DynamicsSpec, space: &Aabb, x: &[f64], u: &[f64], w: &[f64], out: &mut [f64]) {
        match d {
            DynamicsSpec::SaturatedAffine { step, u_clip } => {
                for i in 0..x.len() {
                    let v = x[i] + step * u[i].clamp(u_clip[0], u_clip[1]) + w[i];
                    out[i] = v.clamp(space.lower()[i], space.upper()[i]);
                }
            }
            DynamicsSpec::Absorbing { region, inner } => {
                if region.contains_point(x) {
                    out.copy_from_slice(x);
                } else {
                    Self::apply(inner, space, x, u, w, out);
                }
            }
        }
    }

    /// Checked variant of [`successor`](Self::successor).
    pub fn next_state(&self, x: &[f64], u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        check_dim("state", self.state_dim(), x.len())?;
        check_dim("input", self.input_space.dim(), u.len())?;
        check_dim("noise", self.noise.dim(), w.len())?;
        let mut out = vec![0.0; x.len()];
        self.successor(x, u, w, &mut out);
        Ok(out)
    }

    /// Same system with every state of `region` turned into a fixed point.
    pub fn with_absorbing(&self, region: &Region) -> Result<Self> {
        if let Some(d) = region.dim() {
            check_dim("absorbing region", self.state_dim(), d)?;
        }
        if !region.within(&self.state_space) {
            return Err(Error::input(
                "absorbing region must lie inside the state space",
            ));
        }
        Ok(Self {
            dynamics: DynamicsSpec::Absorbing {
                region: region.clone(),
                inner: Box::new(self.dynamics.clone()),
            },
            ..self.clone()
        })
    }
}
