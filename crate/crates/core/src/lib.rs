//! Forward Euler and backward dynamic-programming schemes for decoupled
//! forward-backward SDEs in one dimension, manufactured test problems with
//! closed-form solutions, and Monte Carlo convergence experiments.

pub mod backward;
pub mod config;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod selfcheck;

pub use error::{Error, Result};
