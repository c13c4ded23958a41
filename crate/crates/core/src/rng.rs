//! Seeded random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream derived from a
//! root seed and a path of integer coordinates (seed domain, step, item
//! index, ...). Streams never share state, so the order in which items are
//! processed cannot change any sampled value.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `root` with each coordinate in `path` into a single 64-bit seed.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(root: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(root, path))
}

pub fn from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Root seeds of the independent random domains of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub env: u64,
    pub rollout: u64,
    pub restructure: u64,
    pub eval: u64,
}

impl Seeds {
    /// Derives all four domains from one base seed.
    pub fn from_base(base: u64) -> Self {
        Seeds {
            env: derive_seed(base, &[1]),
            rollout: derive_seed(base, &[2]),
            restructure: derive_seed(base, &[3]),
            eval: derive_seed(base, &[4]),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::from_base(0)
    }
}
