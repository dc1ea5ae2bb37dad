//! Seed derivation. Every random draw in the crate comes from a `ChaCha8Rng`
//! keyed by an explicit seed plus a purpose-specific path, so reruns never
//! depend on call order across stages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of discriminators into a fresh seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn derive_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

// Stream tags.
pub(crate) const TAG_SPLIT_TRAIN: u64 = 0x5350_4c54;
pub(crate) const TAG_SPLIT_TEST: u64 = 0x5350_4c45;
pub(crate) const TAG_SPLIT_CLASSES: u64 = 0x434c_5353;
pub(crate) const TAG_SYNTH: u64 = 0x5359_4e54;
pub(crate) const TAG_INIT: u64 = 0x494e_4954;
pub(crate) const TAG_EPOCH: u64 = 0x4550_4f43;
pub(crate) const TAG_SAMPLING: u64 = 0x534d_504c;
pub(crate) const TAG_SUBSET: u64 = 0x5355_4253;
