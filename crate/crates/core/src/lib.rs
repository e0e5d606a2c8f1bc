//! Analytical Bayesian credible and plausible regions for maximum-likelihood
//! estimators on convex parameter spaces under a uniform prior, together with
//! Monte Carlo and quadrature estimates of the same quantities.

pub mod error;
pub mod linalg;
pub mod mcvalidate;
pub mod mle;
pub mod model;
pub mod regions;
pub mod specfun;
pub mod statespace;

pub use error::{Error, Result};

/// A `d`-dimensional real parameter column.
pub type ParamVector = nalgebra::DVector<f64>;
