//! Reward oracles: opaque maps from a complete token sequence to a scalar.
//!
//! The synthetic environments are pure after construction. [`BridgeEnv`]
//! forwards evaluations to a child process over line-delimited JSON.

mod bridge;
mod classifier;
mod hidden;
mod tabular;

pub use bridge::BridgeEnv;
pub use classifier::{piecewise_reward, Aggregation, ClassifierConfig, SyntheticClassifierEnv};
pub use hidden::{cosine, HiddenEmbeddingEnv};
pub use tabular::{all_sequences, dp_optimal_q, max_backup_q, DpTable, TabularEnv, MAX_ENUMERATION};

use crate::{Error, Result};

/// Black-box reward for length-`prompt_length` token sequences.
pub trait RewardOracle {
    fn vocab_size(&self) -> usize;

    fn prompt_length(&self) -> usize;

    fn evaluate(&mut self, tokens: &[usize]) -> Result<f64>;
}

impl<O: RewardOracle + ?Sized> RewardOracle for Box<O> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn prompt_length(&self) -> usize {
        (**self).prompt_length()
    }

    fn evaluate(&mut self, tokens: &[usize]) -> Result<f64> {
        (**self).evaluate(tokens)
    }
}

pub(crate) fn check_sequence(tokens: &[usize], vocab_size: usize, length: usize) -> Result<()> {
    if tokens.len() != length {
        return Err(Error::Input(format!(
            "expected a sequence of {length} tokens, got {}",
            tokens.len()
        )));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab_size) {
        return Err(Error::Input(format!(
            "token {bad} out of range for vocabulary of size {vocab_size}"
        )));
    }
    Ok(())
}
