use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

/// Action values with ignored tokens replaced by [`Real::sentinel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FilteredLogits<T> {
    values: Vec<T>,
    ignored_mask: Vec<bool>,
}

impl<T: Real> FilteredLogits<T> {
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn ignored_mask(&self) -> &[bool] {
        &self.ignored_mask
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }
}

/// `F_I[q](z) = q(z)` if `z` is kept, sentinel otherwise.
pub fn apply_filter<T: Real>(q: &[T], ignored: &[bool]) -> Result<FilteredLogits<T>> {
    if q.len() != ignored.len() {
        return Err(Error::Config(format!(
            "filter mask has {} entries for {} action values",
            ignored.len(),
            q.len()
        )));
    }
    if ignored.iter().all(|&x| x) {
        return Err(Error::Domain("filter would ignore every token".into()));
    }
    let values = q
        .iter()
        .zip(ignored)
        .map(|(&v, &skip)| if skip { T::sentinel() } else { v })
        .collect();
    Ok(FilteredLogits {
        values,
        ignored_mask: ignored.to_vec(),
    })
}
