//! Subgroup causal effects in randomized experiments whose binary covariate is
//! missing not at random.
//!
//! The observed data are a contingency table over treatment `T`, covariate
//! `X`, outcome `Y` and missingness indicator `M`, where rows with `M = 1`
//! only record `(T, Y)`. The crate provides closed-form identification under
//! four restricted missingness mechanisms, sharp bounds under an unrestricted
//! one, EM maximum likelihood, a Gibbs sampler, model checking, sensitivity
//! analysis and simulation tools.

pub mod error;
pub mod exec;
pub mod ext;
pub mod fixtures;
pub mod gibbs;
pub mod em;
pub mod identify;
pub mod measures;
pub mod simulate;
pub mod stats;
pub mod tables;

pub use error::{Error, ErrorClass, Result};
pub use exec::Execution;
pub use measures::{eval_measure, Assumption, CausalEstimate, Measure};
pub use tables::{
    compose_joint, observed_loglik, FactoredParams, JointDistribution, MechanismKind, MechanismSpec, ObservedTable,
};
