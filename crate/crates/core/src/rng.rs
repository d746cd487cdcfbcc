//! Deterministic random-stream derivation.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 generator
//! keyed by the user seed plus a list of stream identifiers (substream,
//! time index, patch index, ...). Streams are independent of execution
//! order, so serial and parallel runs produce identical output.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Substream tags. Keeping them in one place avoids accidental collisions.
pub mod streams {
    pub const LOCATION: u64 = 1;
    pub const THETA_INIT: u64 = 2;
    pub const OCCUPANCY_INIT: u64 = 3;
    pub const OCCUPANCY_STEP: u64 = 4;
    pub const THETA_STEP: u64 = 5;
    pub const PATH: u64 = 6;
    pub const MOMENTS: u64 = 7;
    pub const PARTICLES: u64 = 8;
    pub const DUAL_RESAMPLE: u64 = 9;
    pub const REFERENCE: u64 = 10;
    pub const TV_SAMPLES: u64 = 11;
    pub const REPLICATE: u64 = 12;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 generator for the stream identified by `ids` under `seed`.
///
/// The 256-bit ChaCha key is expanded from (seed, ids) with SplitMix64,
/// absorbing one id per round so that distinct id tuples give
/// independent streams.
pub fn stream_rng(seed: u64, ids: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0x6A09_E667_F3BC_C908;
    let _ = splitmix64(&mut state);
    for &id in ids {
        state ^= id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let _ = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Mix a byte string into a u64 tag (FNV-1a). Used to derive per-object
/// fixed seeds, e.g. for a chain's stationary reference run.
pub fn tag_bytes(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}
