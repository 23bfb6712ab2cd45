//! Double-DQN local path planning for a lidar-equipped differential-drive robot.
//!
//! The crate bundles a deterministic 2D simulator, the 26-dimensional state
//! encoding, a two-factor shaped reward, a from-scratch Q-network with RMSProp,
//! uniform experience replay, and a DQN/Double-DQN agent, plus the training,
//! evaluation and comparison harness driven by the `ddqn-nav` binary.
//!
//! Multi-run workloads (seed sweeps, comparison arms, evaluation episodes,
//! gradient checks) fan out through [`exec::Exec`], which uses rayon when the
//! `parallel` feature is enabled and falls back to a plain loop otherwise.
//! Both paths return identical results.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod harness;
pub mod net;
pub mod plot;
pub mod replay;
pub mod reward;
pub mod state;
pub mod world;

pub use error::{Error, Result};

/// Seeded generator used for every stochastic choice in the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Builds a [`SimRng`] from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}

/// Derives an independent seed for sub-task `index` of a run seeded with `seed`.
///
/// SplitMix64 finalizer over the pair, so neighbouring indices give unrelated streams.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
