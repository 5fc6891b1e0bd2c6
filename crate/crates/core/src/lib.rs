//! Tabular reinforcement learning with human-authored knowledge.
//!
//! The crate provides a sparse Q-table with Q-learning and QS-learning update
//! engines (QS spreads each temporal-difference update over a set of similar
//! state-action pairs), eligibility-trace variants, potential-based and
//! step-wise reward shaping, key-remapping state abstraction, and two
//! benchmark domains: simple robotic soccer and predator/prey pursuit. The
//! [`harness`] module runs the batch-train / halted-test evaluation protocol
//! and writes learning curves as CSV.
//!
//! ```
//! use qsrl::config::{preset, RunConfig};
//!
//! let mut cfg = RunConfig::from_preset(preset::SOCCER_EXPERT_QRS).unwrap();
//! cfg.protocol.train_games = 100;
//! cfg.protocol.batch_size = 50;
//! cfg.protocol.test_games = 20;
//! cfg.protocol.repeats = 1;
//! let report = cfg.run(1).unwrap();
//! assert_eq!(report.curve.len(), 2);
//! ```

pub mod abstraction;
pub mod config;
pub mod envs;
pub mod harness;
pub mod learning;
pub mod shaping;
pub mod similarity;
pub mod table;

use rand::SeedableRng;

/// The random generator used for every stochastic choice.
pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// SplitMix64 finaliser, used to derive independent seeds from a master seed.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub use table::{ActionId, Experience, LearningParams, QTable, StateKey};
