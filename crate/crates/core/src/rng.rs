//! Deterministic random substreams.
//!
//! Every stochastic step draws from a ChaCha stream keyed by
//! `(master seed, domain, index...)`, so results never depend on the order in
//! which work items are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Well-known domain labels, kept distinct so streams never collide.
pub mod domain {
    pub const SYNTH_TRAIN: u64 = 0x01;
    pub const SYNTH_TEST: u64 = 0x02;
    pub const KERNELS: u64 = 0x10;
    pub const BASELINE: u64 = 0x20;
    pub const PERMUTATION: u64 = 0x21;
    pub const SHAPLEY: u64 = 0x22;
    pub const KERNEL_SHAP: u64 = 0x23;
    pub const RANDOM_SALIENCY: u64 = 0x24;
    pub const EVAL_MASK: u64 = 0x30;
}

/// Open the stream identified by `seed`, `domain` and a path of indices.
pub fn substream(seed: u64, domain: u64, path: &[u64]) -> Rng {
    let mut key = mix64(seed ^ 0x9E37_79B9_7F4A_7C15);
    key = mix64(key ^ domain.wrapping_mul(0xA076_1D64_78BD_642F));
    for &p in path {
        key = mix64(key ^ p.wrapping_mul(0xE703_7ED1_A0B4_28DB).wrapping_add(1));
    }
    ChaCha8Rng::seed_from_u64(key)
}

/// Stable 64-bit hash of a label, for keying streams by name.
pub fn label(name: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in name.as_bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
