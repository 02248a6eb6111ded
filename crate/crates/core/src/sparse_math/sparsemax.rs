use super::{active_scaled, check_alpha, sort_descending, ActionDistribution};
use crate::{Real, Result};

/// Support size `K` and threshold `tau` for already-scaled, sorted entries.
fn threshold_sorted<T: Real>(sorted: &[(usize, T)]) -> (usize, T) {
    let mut cumsum = T::zero();
    let mut support_sum = T::zero();
    let mut k = 0;
    for (n, &(_, v)) in sorted.iter().enumerate() {
        cumsum += v;
        let count = T::from_usize(n + 1).expect("count");
        if T::one() + count * v > cumsum {
            k = n + 1;
            support_sum = cumsum;
        } else {
            break;
        }
    }
    let k_t = T::from_usize(k).expect("count");
    (k, (support_sum - T::one()) / k_t)
}

fn sorted_active<T: Real>(scaled_q: &[T]) -> Result<Vec<(usize, T)>> {
    let mut active = active_scaled(scaled_q, T::one())?;
    sort_descending(&mut active);
    Ok(active)
}

/// Tokens `z_(n)` (n-th largest) with `1 + n·q_(n) > Σ_{m≤n} q_(m)`, largest first.
pub fn supporting_set<T: Real>(scaled_q: &[T]) -> Result<Vec<usize>> {
    let sorted = sorted_active(scaled_q)?;
    let (k, _) = threshold_sorted(&sorted);
    Ok(sorted[..k].iter().map(|&(i, _)| i).collect())
}

/// `tau = (Σ_{z∈S} q_z − 1) / |S|` over the supporting set `S`.
pub fn tau<T: Real>(scaled_q: &[T]) -> Result<T> {
    let sorted = sorted_active(scaled_q)?;
    Ok(threshold_sorted(&sorted).1)
}

/// `pi = max(q/alpha − tau(q/alpha), 0)`: Euclidean projection of `q/alpha`
/// onto the probability simplex.
pub fn sparsemax_dist<T: Real>(q: &[T], alpha: T) -> Result<ActionDistribution<T>> {
    check_alpha(alpha)?;
    let mut sorted = active_scaled(q, alpha)?;
    sort_descending(&mut sorted);
    let (k, threshold) = threshold_sorted(&sorted);
    let mut probs = vec![T::zero(); q.len()];
    for &(i, v) in &sorted[..k] {
        probs[i] = (v - threshold).max(T::zero());
    }
    Ok(ActionDistribution::new(
        probs,
        sorted[..k].iter().map(|&(i, _)| i),
        Some(threshold),
    ))
}

/// `spmax(q/alpha) = (1 + Σ_{z∈S} ((q_z/alpha)² − tau²)) / 2`.
///
/// `alpha · spmax(q/alpha)` equals `E_pi[q] + alpha · S_2(pi)` for the
/// sparsemax policy `pi`.
pub fn sparsemax_value<T: Real>(q: &[T], alpha: T) -> Result<T> {
    check_alpha(alpha)?;
    let mut sorted = active_scaled(q, alpha)?;
    sort_descending(&mut sorted);
    let (k, threshold) = threshold_sorted(&sorted);
    let t2 = threshold * threshold;
    let sum: T = sorted[..k].iter().map(|&(_, v)| v * v - t2).sum();
    let half = T::lit(0.5);
    Ok(half * (T::one() + sum))
}
