//! Small dense numeric kernel: row-major matrices, a two-layer MLP with
//! hand-written backpropagation, and Adam.

mod adam;
mod matrix;
mod mlp;

pub use adam::AdamState;
pub use matrix::{dot, DenseMatrix};
pub use mlp::{Activation, MlpCache, MlpGradients, MlpParams};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::Real;

/// Draws `n` standard-normal samples scaled by `scale`.
pub fn normal_vec<T: Real, R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> Vec<T> {
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            T::lit(z * scale)
        })
        .collect()
}
