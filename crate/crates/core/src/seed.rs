//! Seed derivation.
//!
//! Every random stream in the pipeline is derived from a single root seed by
//! [`derive`], never drawn from shared generator state. This keeps results
//! independent of evaluation order and of any parallelism.
//!
//! The derivation tree is fixed (changing it changes every result):
//!
//! ```text
//! root
//! ├── derive(root, SYNTH)                    synthetic data
//! ├── derive(root, OUTER + k)                outer fold k of nested CV
//! │   ├── derive(outer, SEARCH)              candidate sampling
//! │   ├── derive(derive(outer, CANDIDATE + i), j)   candidate i, inner fold j
//! │   └── derive(outer, REFIT)               refit of the inner winner
//! ├── derive(root, CV) -> derive(cv, k)      plain k-fold CV, fold k
//! └── derive(root, FINAL)                    final model
//! ```
//!
//! Inside a model, a forest spawns tree `t` as `derive(model_seed, t)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const SYNTH: u64 = 0x5379_6e74_6800_0000;
pub const OUTER: u64 = 0x4f75_7465_7200_0000;
pub const SEARCH: u64 = 0x5365_6172_6368_0000;
pub const CANDIDATE: u64 = 0x4361_6e64_0000_0000;
pub const REFIT: u64 = 0x5265_6669_7400_0000;
pub const CV: u64 = 0x4356_0000_0000_0000;
pub const FINAL: u64 = 0x4669_6e61_6c00_0000;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `stream` under `parent`.
#[inline]
pub fn derive(parent: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ stream.rotate_left(17) ^ 0x2545_f491_4f6c_dd1d)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
