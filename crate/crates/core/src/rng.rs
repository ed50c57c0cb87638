//! Seed discipline.
//!
//! Every trial draws from its own stream, seeded by
//! `hash64(master_seed, cell_index, trial_index)`. The hash is a fixed
//! SplitMix64 cascade, so streams are stable across releases and independent
//! of how trials are scheduled on workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Cell index reserved for draws shared by every cell of an experiment
/// (the fixed law of user 1).
pub const SHARED_CELL: u64 = u64::MAX;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn hash64(master_seed: u64, cell_index: u64, trial_index: u64) -> u64 {
    let h = mix64(master_seed);
    let h = mix64(h ^ cell_index.rotate_left(17));
    mix64(h ^ trial_index.rotate_left(41))
}

pub fn stream_from_seed(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn substream(master_seed: u64, cell_index: u64, trial_index: u64) -> Stream {
    stream_from_seed(hash64(master_seed, cell_index, trial_index))
}
