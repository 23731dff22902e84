//! Deterministic RNG streams keyed by `(master seed, tag, tag, ...)`.
//!
//! Each independent unit of work (a Monte Carlo case, a replicate inside a
//! case, the covariate draw of a replicate) gets its own ChaCha stream so runs
//! are reproducible regardless of how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags for the different consumers inside one case.
pub mod tag {
    pub const COVARIATES: u64 = 1;
    pub const CHAIN: u64 = 2;
    pub const RESEED: u64 = 3;
    pub const ORACLE: u64 = 4;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_rng(master: u64, tags: &[u64]) -> StreamRng {
    let mut state = master;
    let mut mixed = splitmix64(&mut state);
    for &t in tags {
        state ^= t.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17) ^ mixed;
        mixed = splitmix64(&mut state);
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
