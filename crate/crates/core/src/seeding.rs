//! Deterministic seed derivation.
//!
//! Every random component draws from a `ChaCha8Rng` seeded through
//! [`derive_seed`], so one root seed fans out into independent streams
//! without any stream observing another's draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels, centralized so no two consumers collide.
pub mod streams {
    pub const TEXTURE: u64 = 1;
    pub const VIEW_JITTER: u64 = 2;
    pub const FOLD_SHUFFLE: u64 = 3;
    pub const QUERY_PICK: u64 = 4;
    pub const WEIGHT_INIT: u64 = 5;
    pub const TRIPLET_SAMPLING: u64 = 6;
    pub const ACCURACY_SEARCH: u64 = 7;
    pub const CORRELATION: u64 = 8;
}

/// Mixes a root seed with a stream label and two free indices into a new
/// seed. Uses the splitmix64 finalizer, which diffuses single-bit input
/// differences across the whole output word.
pub fn derive_seed(root: u64, stream: u64, a: u64, b: u64) -> u64 {
    let mut z = root
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ a.wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ b.wrapping_mul(0x94D0_49BB_1331_11EB);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha8 generator for a derived stream.
pub fn rng(root: u64, stream: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, stream, a, b))
}
