//! Benchmark harness for predictor-driven lossless compression.
//!
//! [`run::run`] carries one configuration from input file to verified container and
//! report; [`suite::BenchSuite`] runs many of them in parallel. The `tscom` binary is a
//! thin command-line layer over these.

pub mod error;
pub mod ingest;
pub mod output;
pub mod run;
pub mod suite;
pub mod synth;
