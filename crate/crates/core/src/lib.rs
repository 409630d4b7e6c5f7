//! Sound reclamation of probabilistic reach-avoid guarantees after localized,
//! unknown changes in system dynamics, plus recomposition of compositional
//! control plans around the reclaimed edge thresholds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod compose;
pub mod error;
pub mod infimum;
pub mod learner;
pub mod model;
pub mod reclaim;
pub mod scenarios;
pub mod simulate;
pub mod verifier;

pub use error::{Error, Result};
