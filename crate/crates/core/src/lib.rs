//! Lossless compression of byte-serialized time series with pluggable predictors.
//!
//! A [`predictors::Predictor`] supplies a distribution over the next byte, the
//! [`codec`] turns those distributions into a range-coded bitstream, and
//! [`metrics`] scores the result against [`synthetic`] sources with known entropy.

pub mod bridge;
pub mod codec;
pub mod container;
pub mod metrics;
pub mod predictors;
pub mod serialize;
pub mod synthetic;
