//! Reproducible random streams.
//!
//! Every stochastic routine takes a [`Seed`]. Child seeds are derived with a
//! counter-based split: the parent seed keys a ChaCha8 generator, the child
//! key selects the ChaCha stream, and the first output word of that stream is
//! the child seed. Children therefore do not depend on evaluation order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Seed(pub u64);

impl Seed {
    /// Independent child seed for sub-task `key` (cell index, replicate, ...).
    pub fn derive(self, key: u64) -> Seed {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(key);
        Seed(rng.next_u64())
    }

    /// Two-level derivation, e.g. `(purpose, replicate)`.
    pub fn derive2(self, a: u64, b: u64) -> Seed {
        self.derive(a).derive(b)
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}
