//! Frequentist and Bayesian inference for two Lomax populations observed
//! under a joint type-II censoring scheme.

pub mod bayes;
pub mod bootstrap;
pub mod censoring;
pub mod data;
pub mod em;
pub mod error;
pub mod harness;
pub mod interval;
pub mod likelihood;
pub mod lomax;
pub mod rng;

#[cfg(test)]
mod testutil;

pub use censoring::{generate, CensoredSample, SchemeParams};
pub use error::{Error, Result};
pub use interval::{IntervalEstimate, IntervalMethod};
pub use likelihood::{FitMethod, FitResult, Psi, SolverConfig};
pub use lomax::LomaxParams;
