//! Seed policy.
//!
//! A single master seed drives every run. Replica `r` draws from ChaCha8
//! stream `r << 8 | purpose`, so any replica can be regenerated in isolation
//! and results do not depend on how replicas are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Purpose tags occupying the low byte of the stream id.
pub mod purpose {
    pub const MAIN: u8 = 0;
    pub const GAUSSIAN: u8 = 1;
    pub const JUMPS: u8 = 2;
    pub const MARKS: u8 = 3;
    pub const GRAPH: u8 = 4;
    pub const CHAIN: u8 = 5;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPolicy {
    pub master: u64,
}

impl SeedPolicy {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn stream(&self, replica: u64, purpose: u8) -> SimRng {
        stream_rng(self.master, replica, purpose)
    }
}

pub fn stream_rng(master: u64, replica: u64, purpose: u8) -> SimRng {
    assert!(replica < (1 << 56), "replica index out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((replica << 8) | u64::from(purpose));
    rng
}
