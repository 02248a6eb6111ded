use crate::{Error, Real, Result};

/// Tokens whose base logit is strictly below the `k`-th largest base logit.
#[derive(Clone, Debug, PartialEq)]
pub struct IgnorableSet {
    mask: Vec<bool>,
    k: usize,
}

impl IgnorableSet {
    /// `true` for ignored tokens.
    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_ignored(&self, token: usize) -> bool {
        self.mask[token]
    }

    pub fn retained_count(&self) -> usize {
        self.mask.iter().filter(|&&m| !m).count()
    }

    pub fn ignored_indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }
}

pub fn ignorable_from_logits<T: Real>(logits: &[T], k: usize) -> Result<IgnorableSet> {
    if k == 0 || k > logits.len() {
        return Err(Error::Config(format!(
            "top-k must lie in 1..={}, got {k}",
            logits.len()
        )));
    }
    if logits.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN base logit".into()));
    }
    let mut scratch = logits.to_vec();
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, |a, b| b.partial_cmp(a).expect("no NaN"));
    let kth = *kth;
    Ok(IgnorableSet {
        mask: logits.iter().map(|&v| v < kth).collect(),
        k,
    })
}
