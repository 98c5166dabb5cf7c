//! Bayesian semi-parametric estimation of the long-memory parameter `d`
//! under FEXP spectral models.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod inference;
pub mod likelihood;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod simulate;
pub mod toeplitz;

pub use error::{FexpError, Result};
