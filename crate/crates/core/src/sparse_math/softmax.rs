use super::{active_scaled, check_alpha, sort_descending, ActionDistribution};
use crate::{Real, Result};

/// `pi = softmax(q / alpha)` over the non-sentinel entries.
pub fn softmax_dist<T: Real>(q: &[T], alpha: T) -> Result<ActionDistribution<T>> {
    check_alpha(alpha)?;
    let mut active = active_scaled(q, alpha)?;
    let max = active.iter().map(|&(_, v)| v).fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = active.iter().map(|&(_, v)| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    let mut probs = vec![T::zero(); q.len()];
    for (&(i, _), &e) in active.iter().zip(&exps) {
        probs[i] = e / total;
    }
    sort_descending(&mut active);
    Ok(ActionDistribution::new(probs, active.into_iter().map(|(i, _)| i), None))
}

/// `log Σ exp(q_z / alpha)` over the non-sentinel entries.
pub fn logsumexp_value<T: Real>(q: &[T], alpha: T) -> Result<T> {
    check_alpha(alpha)?;
    let active = active_scaled(q, alpha)?;
    let max = active.iter().map(|&(_, v)| v).fold(T::neg_infinity(), T::max);
    let total: T = active.iter().map(|&(_, v)| (v - max).exp()).sum();
    Ok(max + total.ln())
}
