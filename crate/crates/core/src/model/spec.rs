use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::{Aabb, Region};

/// Reach `target` before touching `unsafe_set`, from every state of
/// `initial`, with probability at least `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachAvoidSpec {
    pub target: Region,
    #[serde(rename = "unsafe")]
    pub unsafe_set: Region,
    pub initial: Region,
    pub rho: f64,
}

impl ReachAvoidSpec {
    pub fn new(target: Region, unsafe_set: Region, initial: Region, rho: f64) -> Result<Self> {
        check_probability("rho", rho)?;
        Ok(Self {
            target,
            unsafe_set,
            initial,
            rho,
        })
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        check_probability("rho", rho)?;
        Ok(Self {
            rho,
            ..self.clone()
        })
    }

    /// Checks that every region lives inside `space`.
    pub fn validate(&self, space: &Aabb) -> Result<()> {
        check_probability("rho", self.rho)?;
        for (name, r) in [
            ("target", &self.target),
            ("unsafe", &self.unsafe_set),
            ("initial", &self.initial),
        ] {
            if let Some(d) = r.dim() {
                check_dim("specification region", space.dim(), d)?;
            }
            if !r.within(space) {
                return Err(Error::input(format!(
                    "{name} region is not contained in the state space"
                )));
            }
        }
        Ok(())
    }

    /// Certificate level `1 / (1 - rho)` that unsafe states must reach.
    pub fn safety_level(&self) -> Result<f64> {
        safety_level(self.rho)
    }
}

pub fn safety_level(rho: f64) -> Result<f64> {
    check_probability("rho", rho)?;
    if rho >= 1.0 {
        return Err(Error::input(
            "rho = 1 leaves the safety level 1/(1-rho) undefined",
        ));
    }
    Ok(1.0 / (1.0 - rho))
}

pub(crate) fn check_probability(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::input(format!("{name} must lie in [0, 1], got {p}")))
    }
}
