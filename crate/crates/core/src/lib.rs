//! Simulator for peer-to-peer streaming over a union of random 1-regular
//! digraphs, with a Monte Carlo harness for its statistical properties.
//!
//! The pipeline for one replica is
//! [`topology`] → [`rfa`] → [`flowgraph`] → [`repair`] / [`dissemination`],
//! and [`analysis`] aggregates replicas into checks and sweep tables.

pub mod analysis;
pub mod dissemination;
pub mod error;
pub mod flowgraph;
pub mod output;
pub mod parallel;
pub mod repair;
pub mod rfa;
pub mod rng;
pub mod topology;

pub use error::{Error, Result};
pub use rng::{Domain, RandomSource};
pub use topology::{Network, PeerId, SOURCE};
