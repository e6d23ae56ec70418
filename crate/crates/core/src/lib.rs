//! Online continual fault diagnosis on imbalanced, partially labeled streams.
//!
//! The agent pseudo-labels each arriving batch with MC dropout, drops batch
//! clusters that repeat what the replay buffer already holds, picks a
//! class-balanced coreset of the rest, and takes focal-loss SGD steps on
//! labeled data, coreset and replay.

pub mod buffer;
pub mod cupl;
pub mod data;
pub mod error;
pub mod gbt;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod presets;
pub mod run;
pub mod rcs;

pub use error::{Error, Result};
