//! Randomness amplification with chained Bell inequalities and Santha-Vazirani sources.
//!
//! - [`sv`]: SV distributions, extremal labelings and their convex decomposition.
//! - [`kyfan`]: top-k sums of Bernoulli laws and their large-`r` bounds.
//! - [`chain`]: boxes for the two-party chained Bell scenario.
//! - [`amplify`]: the `p_min` / `delta` / `eps_new` pipeline and thresholds.
//! - [`simulate`]: Monte Carlo runs of the protocol against fixed adversaries.
//! - [`cli`]: the `chainamp` command-line front end.

pub mod amplify;
pub mod chain;
pub mod cli;
pub mod error;
pub mod kyfan;
pub mod logreal;
pub mod scalar;
pub mod simulate;
pub mod sv;

pub use error::{Error, Result};
pub use logreal::LogReal;
pub use sv::{BitString, Epsilon, ExtremalLabeling, ProbDist, Sign};
