//! Named random sub-streams derived from one scenario seed.
//!
//! Each stream is keyed by a stable label, so the values drawn from one
//! stream never depend on how much another stream has been consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const TRIPS: &str = "trips";
pub const DRIVERS: &str = "drivers";
pub const SPAWN: &str = "spawn";
pub const SENSING: &str = "sensing";
pub const SHADOWING: &str = "shadowing";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    seed: u64,
}

impl SeedStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, label: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(label.as_bytes());
        ChaCha8Rng::from_seed(hasher.finalize().into())
    }
}
