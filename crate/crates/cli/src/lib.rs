//! Pipeline front end for the permlayer homogenization kernels.
//!
//! The library half of the `permlayer` binary: configuration loading and
//! validation ([`config`]), the JSON artifact documents stages exchange
//! ([`artifacts`]), the per-stage computations ([`stages`]), and the
//! cached, manifest-tracked orchestration ([`pipeline`]).

pub mod artifacts;
pub mod config;
pub mod pipeline;
pub mod stages;
