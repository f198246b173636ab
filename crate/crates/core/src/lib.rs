//! Simulation core for decentralized gradient descent with coordinate-wise
//! trimmed-mean screening under man-in-the-middle link attacks.
//!
//! `no_std` with `alloc`. Every random draw comes from a labeled SplitMix64
//! substream of one master seed (see [`rng`]), so runs are reproducible.
//!
//! - [`graph`]: directed graphs, filtered graphs and the connectivity check.
//! - [`attack`]: compromised-link sets, link selection and message corruption.
//! - [`screening`]: trimmed mean and other rules, plus the mixing-row oracle.
//! - [`mixing`]: products of stochastic matrices and ergodicity coefficients.
//! - [`objectives`], [`data`]: local losses and synthetic datasets.
//! - [`runner`]: the round loop.
//! - [`metrics`]: error sequences and rate fits on trajectories.

#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attack;
pub mod data;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod mixing;
pub mod objectives;
pub mod rng;
pub mod runner;
pub mod screening;
pub mod stats;

pub use error::{Error, Result};
