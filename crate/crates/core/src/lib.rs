//! Downlink resource management for an integrated terrestrial / LEO satellite
//! cellular network.
//!
//! The crate generates a seeded rural deployment (hexagonal macro grid plus one
//! earth-fixed satellite beam), computes large-scale channel gains, and
//! maximizes the network sum of log-throughputs by alternating two stages:
//!
//! 1. UE association, per-BS load and the satellite/terrestrial bandwidth
//!    split, solved through the Lagrangian dual with subgradient updates
//!    ([`dual`]).
//! 2. Per-BS transmit power, solved by diagonal-Hessian Newton ascent with
//!    projection onto the coverage box ([`power`]).
//!
//! [`orchestrator`] runs the framework next to the max-RSRP benchmarks and
//! [`campaign`] drives multi-seed runs from a config file.

pub mod campaign;
pub mod channel;
pub mod dual;
pub mod error;
pub mod linkmodel;
pub mod orchestrator;
pub mod power;
pub mod scenario;
pub mod units;

pub use error::{Error, Result};
