//! Deterministic RNG streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by a base
//! seed and a path of stream identifiers, so results never depend on thread
//! scheduling or on how many other streams were consumed first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags. Values are part of the reproducibility contract.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const CENTERS: u64 = 10;
    pub const ROTATION: u64 = 11;
    pub const CALIBRATION: u64 = 12;
    pub const TRAIN_SAMPLES: u64 = 13;
    pub const TEST_SAMPLES: u64 = 14;
    pub const TRIAL: u64 = 20;
    pub const AUTOENCODER: u64 = 21;
    pub const BOOTSTRAP: u64 = 30;
    pub const SUBSAMPLE: u64 = 31;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of stream identifiers.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &id| splitmix64(acc ^ splitmix64(id.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream_rng(seed: u64, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, path))
}
