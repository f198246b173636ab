//! Experiment harness for the resist-core simulator: configuration files,
//! seeded suites with CSV output, IDX and edge-list readers, and the
//! acceptance battery.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod formats;
pub mod suite;

pub use error::{SimError, SimResult};
