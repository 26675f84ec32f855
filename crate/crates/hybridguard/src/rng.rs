//! Deterministic RNG derivation.
//!
//! Every random draw in the crate comes from a ChaCha20 stream derived from a
//! user-supplied seed plus a list of domain tags (stage, epoch, layer, ...).
//! Deriving fresh streams instead of sharing one mutable RNG keeps results
//! independent of evaluation order and makes checkpoint/resume exact: epoch n
//! uses the same stream whether or not the process was restarted before it.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stage tags for [`derive_rng`]. Centralised so two call sites can never
/// collide on the same stream by accident.
pub mod tags {
    pub const INIT_PARAMS: u64 = 0x01;
    pub const DROPOUT: u64 = 0x02;
    pub const SPLIT: u64 = 0x03;
    pub const GAN_EPOCH: u64 = 0x04;
    pub const SAMPLE: u64 = 0x05;
    pub const AUGMENT: u64 = 0x06;
    pub const DOWNSAMPLE: u64 = 0x07;
    pub const BOOTSTRAP: u64 = 0x08;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a ChaCha20 RNG from a seed and a sequence of domain tags.
pub fn derive_rng(seed: u64, tag_path: &[u64]) -> ChaCha20Rng {
    let mut state = seed;
    let _ = splitmix64(&mut state);
    for &tag in tag_path {
        state ^= tag.wrapping_mul(0xa24b_aed4_963e_e407);
        let _ = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha20Rng::from_seed(key)
}
