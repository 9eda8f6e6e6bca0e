//! Drone-enabled smart-vehicle network simulator.
//!
//! RSUs are scattered by a hard-core point process, child-drones hover at
//! K-means centroids, an air-to-ground channel model yields per-link SINR,
//! and a greedy heuristic associates RSUs with drones under bandwidth,
//! link-count, interference and backhaul limits. A small permissioned
//! ledger gates which drones and RSUs take part.

pub mod association;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod ledger;
pub mod seed;

pub use error::{Error, Result};
