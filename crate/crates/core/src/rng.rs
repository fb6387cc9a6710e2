//! Counter-based random streams.
//!
//! Every ensemble member draws from its own ChaCha stream selected by
//! `(master seed, member index)`, so results do not depend on execution order
//! or on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// Independent stream `index` under `master_seed`.
pub fn stream(master_seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Derives a sub-seed for a named stage so that independent stages sharing a
/// master seed do not reuse streams.
pub fn derive_seed(master_seed: u64, stage: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = master_seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
