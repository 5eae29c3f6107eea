//! Zero-field AC magnetometry with spin-1 clock sensors under continuous RF
//! dressing and microwave dynamical decoupling.
//!
//! Frequencies are angular (rad/s) and times are seconds throughout; see
//! [`units`] for "(2π)·MHz" helpers.

pub mod analysis;
pub mod cli;
pub mod engine;
pub mod error;
pub mod hamiltonian;
pub mod noise;
pub mod sequence;
pub mod spin;
pub mod units;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
