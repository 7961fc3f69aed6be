//! Seed derivation.
//!
//! Every random draw in a run comes from a ChaCha stream whose seed is
//! derived from the master seed plus a label path (stage, iteration, claim
//! id). Work can therefore be split across threads in any order without
//! changing a single output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Incremental seed builder.
#[derive(Clone, Copy, Debug)]
pub struct SeedPath(u64);

impl SeedPath {
    pub fn new(master: u64) -> Self {
        SeedPath(splitmix64(master ^ FNV_OFFSET))
    }

    pub fn with_str(self, part: &str) -> Self {
        let mut h = self.0;
        for b in part.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        // length terminator keeps ("ab","c") distinct from ("a","bc")
        h ^= part.len() as u64;
        SeedPath(splitmix64(h))
    }

    pub fn with_u64(self, part: u64) -> Self {
        SeedPath(splitmix64(self.0 ^ splitmix64(part)))
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> StreamRng {
        StreamRng::seed_from_u64(self.0)
    }
}

pub fn rng_from_seed(seed: u64) -> StreamRng {
    StreamRng::seed_from_u64(seed)
}
