//! Simulation of the multiplicative coalescent through three equivalent
//! representations (Markov chain, exponential marks, breadth-first walk on
//! the random graph) and of the Lévy-type processes whose excursions
//! describe its near-critical scaling limit.

pub mod bfw;
pub mod config;
pub mod error;
pub mod exact;
pub mod levy;
pub mod partition;
pub mod path;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod uribe;

pub use config::{MassConfig, RegimeParams};
pub use error::{Error, Result};
pub use partition::{Partition, Trajectory};
pub use path::SkeletonPath;
