//! Policy and value operators of entropy-regularized Q-learning.
//!
//! Every operator accepts raw action values `q` (one entry per token) plus the
//! regularization coefficient `alpha`, and works on `q / alpha`. Entries equal
//! to [`Real::sentinel`] are treated as filtered out: they never enter a
//! support, receive probability exactly zero and are skipped by every sum.

mod filter;
mod softmax;
mod sparsemax;

pub use filter::{apply_filter, FilteredLogits};
pub use softmax::{logsumexp_value, softmax_dist};
pub use sparsemax::{sparsemax_dist, sparsemax_value, supporting_set, tau};

use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Probability vector over the vocabulary together with its support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ActionDistribution<T> {
    probabilities: Vec<T>,
    support: Vec<usize>,
    threshold_value: Option<T>,
}

impl<T: Real> ActionDistribution<T> {
    pub(crate) fn new(probabilities: Vec<T>, order: impl IntoIterator<Item = usize>, threshold: Option<T>) -> Self {
        let support = order
            .into_iter()
            .filter(|&i| probabilities[i] > T::zero())
            .collect();
        Self {
            probabilities,
            support,
            threshold_value: threshold,
        }
    }

    pub fn probabilities(&self) -> &[T] {
        &self.probabilities
    }

    /// Indices with strictly positive probability, highest value first.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// `K_alpha`, the number of actions with non-zero probability.
    pub fn support_size(&self) -> usize {
        self.support.len()
    }

    /// Sparsemax threshold `tau(q / alpha)`; `None` for softmax distributions.
    pub fn threshold(&self) -> Option<T> {
        self.threshold_value
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// `E_pi[values]`.
    pub fn expectation(&self, values: &[T]) -> T {
        self.support
            .iter()
            .map(|&i| self.probabilities[i] * values[i])
            .sum()
    }

    /// Inverse-CDF draw over the support given `u` in `[0, 1)`.
    pub fn sample_with(&self, u: T) -> usize {
        let mut acc = T::zero();
        for &i in &self.support {
            acc += self.probabilities[i];
            if u < acc {
                return i;
            }
        }
        *self.support.last().expect("distribution support is never empty")
    }
}

/// Which entropy regularizer drives the policy and the bootstrapped value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackupKind {
    /// Sparse Tsallis entropy: sparsemax policy, `alpha · spmax(q/alpha)` value.
    Sparsemax,
    /// Shannon entropy: softmax policy, `alpha · log Σ exp(q/alpha)` value.
    Logsumexp,
}

impl BackupKind {
    pub fn policy<T: Real>(self, q: &[T], alpha: T) -> Result<ActionDistribution<T>> {
        match self {
            BackupKind::Sparsemax => sparsemax_dist(q, alpha),
            BackupKind::Logsumexp => softmax_dist(q, alpha),
        }
    }

    /// Soft state value `alpha · V(q / alpha)`, in the units of `q`.
    pub fn soft_value<T: Real>(self, q: &[T], alpha: T) -> Result<T> {
        let v = match self {
            BackupKind::Sparsemax => sparsemax_value(q, alpha)?,
            BackupKind::Logsumexp => logsumexp_value(q, alpha)?,
        };
        Ok(alpha * v)
    }

    pub fn name(self) -> &'static str {
        match self {
            BackupKind::Sparsemax => "sparsemax",
            BackupKind::Logsumexp => "logsumexp",
        }
    }
}

/// Tsallis entropy `S_q(pi) = k (1 − Σ pi^q) / (q (q − 1))`.
///
/// Normalized so that index 2 with `k = 1` is the sparse Tsallis entropy
/// `E_pi[(1 − pi) / 2]` and the `q → 1` limit is `k · (−Σ pi ln pi)`.
pub fn tsallis_entropy<T: Real>(dist: &ActionDistribution<T>, entropic_index: T, scalar_k: T) -> Result<T> {
    if !(scalar_k > T::zero()) {
        return Err(Error::Config(format!("tsallis scalar k must be positive, got {scalar_k}")));
    }
    let probs = dist.support().iter().map(|&i| dist.probabilities()[i]);
    if entropic_index == T::one() {
        let shannon: T = probs.map(|p| -p * p.ln()).sum();
        return Ok(scalar_k * shannon);
    }
    let power_sum: T = probs.map(|p| p.powf(entropic_index)).sum();
    Ok(scalar_k * (T::one() - power_sum) / (entropic_index * (entropic_index - T::one())))
}

/// Index of the largest non-sentinel entry; ties go to the lowest index.
pub fn greedy_action<T: Real>(q: &[T]) -> Result<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &v) in q.iter().enumerate() {
        if v.is_sentinel() {
            continue;
        }
        if v.is_nan() {
            return Err(Error::Numeric(format!("NaN action value at index {i}")));
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::Domain("every action is filtered out".into()))
}

pub(crate) fn check_alpha<T: Real>(alpha: T) -> Result<()> {
    if alpha > T::zero() && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must be positive and finite, got {alpha}")))
    }
}

/// Non-sentinel entries as `(index, value / alpha)`.
pub(crate) fn active_scaled<T: Real>(q: &[T], alpha: T) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::with_capacity(q.len());
    for (i, &v) in q.iter().enumerate() {
        if v.is_sentinel() {
            continue;
        }
        if !v.is_finite() {
            return Err(Error::Numeric(format!("non-finite action value {v} at index {i}")));
        }
        out.push((i, v / alpha));
    }
    if out.is_empty() {
        return Err(Error::Domain("every action is filtered out".into()));
    }
    Ok(out)
}

/// Descending by value, ties broken by ascending index.
pub(crate) fn sort_descending<T: Real>(entries: &mut [(usize, T)]) {
    entries.sort_unstable_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("finite values")
            .then(a.0.cmp(&b.0))
    });
}
