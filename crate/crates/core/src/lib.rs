//! Monte Carlo power analysis of multivariate scoring rules.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decision;
pub mod distributions;
pub mod error;
pub mod numeric;
pub mod power;
pub mod rng;
pub mod ror;
pub mod scoring;
pub mod testcases;

pub use distributions::{CovStructure, Distribution, Marginal, SampleMatrix};
pub use error::{Error, Result};
pub use power::{estimate_delta, n_min, power_from_stats, tune_epsilon, DeltaStats, PowerResult, TrialConfig};
pub use rng::Seed;
pub use scoring::{Forecast, ScoringRule};
pub use testcases::{make_case, CasePair, TestCaseId};
