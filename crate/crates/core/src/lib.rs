//! Exact distributions of stopping times and stopped sums.
//!
//! Exponential tilting turns the law of a stopped sum `S_T` into the law of
//! the stopping time `T` and back. This crate evaluates those identities for
//! two families of problems:
//!
//! * first exit of a random walk with exponential up and down steps from an
//!   interval `(-a, b)` (or first crossing of `b` alone), see [`exit`];
//! * the number of lots `T` and defectives `S_T` until a k-run (or k-of-m
//!   scan) switching rule fires in attribute acceptance sampling, see
//!   [`sampling`], with EM estimation of the defect rate from observed
//!   switching times in [`em`].
//!
//! Distributions come out as truncated power-series coefficients
//! ([`Series`]); [`sim`] provides seeded Monte Carlo oracles.

pub mod dual;
pub mod em;
pub mod error;
pub mod exit;
pub mod sampling;
pub mod scalar;
pub mod series;
pub mod sim;
pub mod tilted;

pub use dual::{eval_unary, Dual, UnaryFn};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use series::Series;
pub use tilted::{BinomialSample, MixedExpStep, TiltedMixedExpStep};
