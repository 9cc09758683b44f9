//! Randomness-beacon laboratory: extractors, a universal lower-bound
//! adversary, and simulators for blockchain-based beacons under
//! budget-limited adversaries.

pub mod backbone;
pub mod dist;
pub mod error;
pub mod extractors;
pub mod forkless;
pub mod hybrid;
pub mod lowerbound;
pub mod multichain;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
