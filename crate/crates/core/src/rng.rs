//! Seed derivation and random substreams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`], a
//! counter-based generator whose output is addressed by `(key, stream,
//! word position)`. A stage of a computation derives its own key from the
//! master seed with [`derive_seed`], and parallel work items (records
//! blocks, trees, sub-samples) read from [`substream`]`(key, index)`.
//! Results therefore never depend on thread count or scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage tags used with [`derive_seed`].
pub mod tag {
    pub const COVARIATES: u64 = 0x01;
    pub const LABELS: u64 = 0x02;
    pub const SEASON: u64 = 0x03;
    pub const TREES: u64 = 0x10;
    pub const PERMUTATIONS: u64 = 0x11;
    pub const VSURF_STAGE1: u64 = 0x12;
    pub const VSURF_STAGE2: u64 = 0x13;
    pub const UNDERSAMPLE: u64 = 0x20;
    pub const SUBSAMPLE: u64 = 0x21;
    pub const FOLDS: u64 = 0x30;
    pub const SPLIT: u64 = 0x31;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `(seed, tag, index)`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index)
}

/// Generator keyed by `seed`, positioned at the start of stream `stream`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
