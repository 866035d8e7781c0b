//! Seed derivation for the deterministic generator hierarchy.
//!
//! All randomness in the crate flows from explicit `u64` seeds. A campaign
//! seed derives per-episode seeds, an episode seed derives the simulator
//! noise stream, and so on. Derivation is pure mixing, so any subset of
//! episodes reproduces bit-identically regardless of execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The stream cipher generator used throughout; fast and platform-stable.
pub type Rng = ChaCha12Rng;

/// splitmix64 finalizer; full-period mixing of a 64-bit value.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a stream label.
///
/// Distinct labels give statistically independent child streams; the same
/// `(parent, label)` pair always gives the same child.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    splitmix64(parent ^ splitmix64(label))
}

/// Construct the generator for a given seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
