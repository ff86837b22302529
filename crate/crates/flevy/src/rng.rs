//! Deterministic derivation of child random streams.
//!
//! Every stochastic operation in the crate takes one root seed and derives
//! the streams it needs by hashing the root together with a list of purpose
//! words (a tag for the role of the stream plus indices such as the path
//! number, the side of the time axis, or the driver component).  Replications
//! therefore never share or race on a generator: results are byte-identical
//! for a given root seed no matter how work is ordered or parallelized, and
//! changing e.g. the number of paths does not perturb the draws of the paths
//! that are kept.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Purpose words used when deriving child streams.  Values are arbitrary
/// but fixed: changing them changes every sampled number in the crate.
pub mod tag {
    /// Increments on the non-negative side of the time axis.
    pub const SIDE_POS: u64 = 0x5053;
    /// Increments on the negative side of the time axis.
    pub const SIDE_NEG: u64 = 0x4E47;
    /// Brownian component of a driver.
    pub const GAUSSIAN: u64 = 0x4741;
    /// Compound-Poisson component of a driver (followed by the atom index).
    pub const ATOM: u64 = 0x4154;
    /// Jump count/position stream of a truncated-stable component.
    pub const STABLE_JUMPS: u64 = 0x534A;
    /// Small-jump Gaussian residual of a truncated-stable component.
    pub const STABLE_RESIDUAL: u64 = 0x5352;
    /// One Monte Carlo replication (followed by the replication index).
    pub const REPLICATION: u64 = 0x5250;
    /// Gaussian surrogate for the driver mass beyond the truncation radius.
    pub const TAIL_SURROGATE: u64 = 0x5453;
    /// Draws of the derivative-at-zero integrals.
    pub const DERIVATIVE: u64 = 0x4430;
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a root seed and a list of purpose words.
///
/// The derivation is a small sponge: each word is absorbed with a distinct
/// odd increment and the state is passed through a 64-bit finalizer, so
/// different word lists give statistically unrelated children.
pub fn derive_seed(root: u64, parts: &[u64]) -> u64 {
    let mut state = root ^ 0x6A09_E667_F3BC_C909;
    for &p in parts {
        state = mix(state.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p));
    }
    mix(state ^ (parts.len() as u64).wrapping_mul(0xFF51_AFD7_ED55_8CCD))
}

/// A seeded child generator for the given purpose words.
pub fn child_rng(root: u64, parts: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(root, parts))
}
