//! Numerical laboratory for stochastic flows under the standard Gaussian
//! measure: vector-field calculus with the Gaussian divergence,
//! Ornstein-Uhlenbeck mollification, Euler-Maruyama flows with pathwise
//! Radon-Nikodym factors, push-forward density estimation with analytic
//! L^p / entropy bounds, and the maximal-function stability toolkit.
//!
//! Everything randomized is keyed by explicit (seed, stream, index)
//! counters, and Monte Carlo reductions use a fixed pairwise order, so
//! results are bit-identical across thread counts.

pub mod density;
pub mod error;
pub mod fields;
pub mod mollify;
pub mod numerics;
pub mod quadrature;
pub mod rng;
pub mod sde;
pub mod stability;

pub use error::{GaussFlowError, Result};
