//! Entropy-regularized Q-learning agents over token sequences.
//!
//! One agent type covers every variant: the backup kind picks sparse Tsallis
//! (sparsemax) or Shannon (log-sum-exp) regularization, `use_filter` turns
//! the ignorable-token filter on for both sampling and targets, and
//! `use_replay` switches between replayed batches and on-policy updates.

mod config;
mod replay;
mod state;

pub use config::{make_variant, AgentConfig, Variant};
pub use replay::{Episode, ReplayBuffer};
pub use state::{AgentState, CurveRecord, SamplingStats};
