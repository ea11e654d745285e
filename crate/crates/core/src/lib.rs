//! Risk-based network meta-regression.
//!
//! Three stages turn cohort and trial data into per-patient,
//! treatment-specific outcome predictions:
//!
//! 1. [`stage1`] fits a logistic mixed-effects prognostic model for the
//!    baseline risk on cohort data (Laplace shrinkage, subject random effects)
//!    and validates it with Harrell's bootstrap optimism correction.
//! 2. [`stage2`] recalibrates that model for the trial populations
//!    (intercept, intercept + overall slope, or selective re-estimation).
//! 3. [`nma`] fits a Bayesian network meta-regression combining individual
//!    (Bernoulli) and aggregate (Binomial) trial data with the logit baseline
//!    risk as prognostic factor and within/between-study effect modifier.
//!    Aggregate studies get their mean logit risk from pseudo-IPD
//!    ([`pseudo_ipd`]).
//!
//! [`prediction`] turns the network posterior plus population anchors into
//! treatment-specific probabilities, risk curves and strata tables.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod glm;
pub mod math;
pub mod nma;
pub mod prediction;
pub mod pseudo_ipd;
pub mod risk;
pub mod sampler;
pub mod simulation;
pub mod stage1;
pub mod stage2;

pub use error::{Error, Result, Warning};
