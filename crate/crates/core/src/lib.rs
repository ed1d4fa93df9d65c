//! Fraud-detection toolkit: base classifiers with class-imbalance handling,
//! majority-vote and OR-logic ensembles, K-means cluster-then-classify
//! pipelines, and the evaluation harness used to compare them.
//!
//! The usual flow is
//!
//! 1. [`dataset::load_csv`] a transaction table,
//! 2. scale it with [`dataset::fit_scaler`] / [`dataset::apply_scaler`],
//! 3. optionally pick features with [`feature_select::select_features`],
//! 4. fit learners ([`learners::fit_classifier`]), ensembles
//!    ([`ensemble`]) or mixed models ([`mixed::fit_mixed`]),
//! 5. score them with [`eval`].
//!
//! [`runner`] wires the whole thing together for configuration-driven sweeps.

pub mod clustering;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod feature_select;
pub mod learners;
pub mod matrix;
pub mod mixed;
pub mod runner;

pub use error::{Error, Result};
pub use matrix::Matrix;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded generator used by every randomized routine; ChaCha8 keeps streams
/// stable across platforms and crate releases.
pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream seed from a base seed and a salt.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
