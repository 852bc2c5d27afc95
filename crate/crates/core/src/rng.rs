//! Seed plumbing. Every random stream in the lab is a ChaCha8 generator keyed
//! from the single experiment seed plus a stream tag.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a textual tag (FNV-1a folded
/// through splitmix so nearby tags give unrelated streams).
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    splitmix64(seed ^ splitmix64(h))
}

pub fn derive_seed_n(seed: u64, tag: &str, n: u64) -> u64 {
    splitmix64(derive_seed(seed, tag) ^ splitmix64(n.wrapping_add(1)))
}

pub fn rng_from(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}
