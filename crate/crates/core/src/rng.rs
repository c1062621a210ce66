//! Reproducible random streams.
//!
//! Every path owns one ChaCha8 key derived from `(base_seed, path_index)`;
//! each source of randomness within the path reads its own ChaCha stream
//! under that key. Sharing a role between two integrations therefore means
//! sharing the exact same sequence of draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Source of randomness inside one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamRole {
    /// Brownian motion `B₁..B₄`, indexed from zero.
    Brownian(u8),
    JumpTimes,
    JumpMarks,
}

impl StreamRole {
    fn stream_id(self) -> u64 {
        match self {
            StreamRole::Brownian(k) => u64::from(k),
            StreamRole::JumpTimes => 16,
            StreamRole::JumpMarks => 17,
        }
    }
}

/// SplitMix64 finalizer, used to decorrelate nearby seeds.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of path `path_index` in an ensemble started from `base_seed`.
pub fn path_seed(base_seed: u64, path_index: u64) -> u64 {
    mix64(mix64(base_seed) ^ path_index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Independent generator for one role of the path identified by `seed`.
pub fn stream(seed: u64, role: StreamRole) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(role.stream_id());
    rng
}

/// FNV-1a accumulator over the bit patterns of consumed increments.
#[derive(Debug, Clone, Copy)]
pub struct Digest(u64);

impl Default for Digest {
    fn default() -> Self {
        Digest(0xcbf2_9ce4_8422_2325)
    }
}

impl Digest {
    pub fn push(&mut self, x: f64) {
        for byte in x.to_bits().to_le_bytes() {
            self.0 ^= u64::from(byte);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }

    pub fn value(self) -> u64 {
        self.0
    }
}
