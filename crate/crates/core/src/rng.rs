//! Seeded, splittable randomness.
//!
//! Every random stream is a ChaCha20 generator whose 256-bit key is the
//! SHA-256 digest of `seed (little-endian u64) || 0x00 || label`. Child
//! streams are derived by extending the label with `/`, so a run is fully
//! determined by its top-level seed and the labels used along the way.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// Identifier recorded in manifests and checkpoints.
pub const RNG_ALGORITHM: &str = "chacha20-sha256-split/v1";

pub type PuRng = ChaCha20Rng;

/// A seed plus the path of labels that led to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
    path: String,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            path: String::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn child(&self, label: impl AsRef<str>) -> Self {
        let path = if self.path.is_empty() {
            label.as_ref().to_owned()
        } else {
            format!("{}/{}", self.path, label.as_ref())
        };
        Self {
            seed: self.seed,
            path,
        }
    }

    pub fn rng(&self) -> PuRng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update([0u8]);
        h.update(self.path.as_bytes());
        ChaCha20Rng::from_seed(h.finalize().into())
    }
}

pub fn rng_for(seed: u64, label: &str) -> PuRng {
    SeedStream::new(seed).child(label).rng()
}
