use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{normal_vec, DenseMatrix};
use crate::{Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    /// Identity nonlinearity; used to build exactly linear adapters.
    Linear,
}

impl Activation {
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Linear => x,
        }
    }

    fn derivative<T: Real>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Linear => T::one(),
        }
    }
}

/// Two-layer perceptron mapping `R^dim -> R^dim`:
/// `out = W2 · act(W1 · x + b1) + b2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MlpParams<T> {
    pub layer1_weights: DenseMatrix<T>,
    pub layer1_bias: Vec<T>,
    pub layer2_weights: DenseMatrix<T>,
    pub layer2_bias: Vec<T>,
    pub activation: Activation,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct MlpCache<T> {
    input: Vec<T>,
    pre_activation: Vec<T>,
    hidden: Vec<T>,
}

impl<T> MlpCache<T> {
    pub fn pre_activation(&self) -> &[T] {
        &self.pre_activation
    }
}

/// Gradient (or moment) buffers with the same shapes as [`MlpParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct MlpGradients<T> {
    pub layer1_weights: DenseMatrix<T>,
    pub layer1_bias: Vec<T>,
    pub layer2_weights: DenseMatrix<T>,
    pub layer2_bias: Vec<T>,
}

impl<T: Real> MlpParams<T> {
    /// He-initialised first layer, `1/sqrt(hidden)`-scaled second layer, zero biases.
    pub fn random<R: Rng + ?Sized>(dim: usize, hidden: usize, activation: Activation, rng: &mut R) -> Self {
        let w1 = normal_vec(rng, hidden * dim, (2.0 / dim as f64).sqrt());
        let w2 = normal_vec(rng, dim * hidden, (1.0 / hidden as f64).sqrt());
        Self {
            layer1_weights: DenseMatrix::from_vec(hidden, dim, w1).expect("shape"),
            layer1_bias: vec![T::zero(); hidden],
            layer2_weights: DenseMatrix::from_vec(dim, hidden, w2).expect("shape"),
            layer2_bias: vec![T::zero(); dim],
            activation,
        }
    }

    pub fn zeros(dim: usize, hidden: usize, activation: Activation) -> Self {
        Self {
            layer1_weights: DenseMatrix::zeros(hidden, dim),
            layer1_bias: vec![T::zero(); hidden],
            layer2_weights: DenseMatrix::zeros(dim, hidden),
            layer2_bias: vec![T::zero(); dim],
            activation,
        }
    }

    /// Linear adapter that reproduces its input exactly. Requires `hidden >= dim`.
    pub fn identity(dim: usize, hidden: usize) -> Result<Self> {
        if hidden < dim {
            return Err(Error::Config(format!(
                "identity adapter needs hidden >= dim, got hidden {hidden} < dim {dim}"
            )));
        }
        Ok(Self {
            layer1_weights: DenseMatrix::identity_padded(hidden, dim),
            layer1_bias: vec![T::zero(); hidden],
            layer2_weights: DenseMatrix::identity_padded(dim, hidden),
            layer2_bias: vec![T::zero(); dim],
            activation: Activation::Linear,
        })
    }

    pub fn dim(&self) -> usize {
        self.layer1_weights.cols()
    }

    pub fn hidden(&self) -> usize {
        self.layer1_weights.rows()
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.dim() {
            return Err(Error::Config(format!(
                "adapter expects input of length {}, got {}",
                self.dim(),
                input.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<(Vec<T>, MlpCache<T>)> {
        self.check_input(input)?;
        let mut pre = self.layer1_weights.matvec(input)?;
        for (p, &b) in pre.iter_mut().zip(&self.layer1_bias) {
            *p += b;
        }
        let hidden: Vec<T> = pre.iter().map(|&p| self.activation.apply(p)).collect();
        let mut out = self.layer2_weights.matvec(&hidden)?;
        for (o, &b) in out.iter_mut().zip(&self.layer2_bias) {
            *o += b;
        }
        let cache = MlpCache {
            input: input.to_vec(),
            pre_activation: pre,
            hidden,
        };
        Ok((out, cache))
    }

    pub fn apply(&self, input: &[T]) -> Result<Vec<T>> {
        self.forward(input).map(|(out, _)| out)
    }

    /// Gradients of `grad_output · forward(input)` with respect to every parameter.
    pub fn backward(&self, cache: &MlpCache<T>, grad_output: &[T]) -> Result<MlpGradients<T>> {
        let mut grads = MlpGradients::zeros_like(self);
        self.accumulate_backward(cache, grad_output, T::one(), &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale ·` [`backward`](Self::backward) into `grads`.
    pub fn accumulate_backward(
        &self,
        cache: &MlpCache<T>,
        grad_output: &[T],
        scale: T,
        grads: &mut MlpGradients<T>,
    ) -> Result<()> {
        if cache.input.len() != self.dim()
            || cache.hidden.len() != self.hidden()
            || grad_output.len() != self.layer2_bias.len()
        {
            return Err(Error::Internal("activation cache does not match adapter shape".into()));
        }
        grads.layer2_weights.add_outer(grad_output, &cache.hidden, scale);
        for (g, &d) in grads.layer2_bias.iter_mut().zip(grad_output) {
            *g += scale * d;
        }
        let mut grad_pre = self.layer2_weights.matvec_transposed(grad_output)?;
        for (g, &p) in grad_pre.iter_mut().zip(&cache.pre_activation) {
            *g *= self.activation.derivative(p);
        }
        grads.layer1_weights.add_outer(&grad_pre, &cache.input, scale);
        for (g, &d) in grads.layer1_bias.iter_mut().zip(&grad_pre) {
            *g += scale * d;
        }
        Ok(())
    }

    pub fn slices(&self) -> [&[T]; 4] {
        [
            self.layer1_weights.as_slice(),
            &self.layer1_bias,
            self.layer2_weights.as_slice(),
            &self.layer2_bias,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [T]; 4] {
        [
            self.layer1_weights.as_mut_slice(),
            &mut self.layer1_bias,
            self.layer2_weights.as_mut_slice(),
            &mut self.layer2_bias,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// `self ← rho · self + (1 − rho) · other`, elementwise.
    pub fn blend_towards(&mut self, other: &MlpParams<T>, rho: T) -> Result<()> {
        if self.dim() != other.dim() || self.hidden() != other.hidden() {
            return Err(Error::Config("cannot blend adapters of different shapes".into()));
        }
        let keep = T::one() - rho;
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = rho * *d + keep * s;
            }
        }
        Ok(())
    }
}

impl<T: Real> MlpGradients<T> {
    pub fn zeros_like(params: &MlpParams<T>) -> Self {
        Self {
            layer1_weights: DenseMatrix::zeros(params.hidden(), params.dim()),
            layer1_bias: vec![T::zero(); params.hidden()],
            layer2_weights: DenseMatrix::zeros(params.dim(), params.hidden()),
            layer2_bias: vec![T::zero(); params.dim()],
        }
    }

    pub fn slices(&self) -> [&[T]; 4] {
        [
            self.layer1_weights.as_slice(),
            &self.layer1_bias,
            self.layer2_weights.as_slice(),
            &self.layer2_bias,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [T]; 4] {
        [
            self.layer1_weights.as_mut_slice(),
            &mut self.layer1_bias,
            self.layer2_weights.as_mut_slice(),
            &mut self.layer2_bias,
        ]
    }

    pub fn scale(&mut self, factor: T) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == T::zero()))
    }

    fn matches(&self, params: &MlpParams<T>) -> bool {
        self.slices()
            .iter()
            .zip(params.slices())
            .all(|(a, b)| a.len() == b.len())
    }
}

impl<T: Real> MlpGradients<T> {
    pub(crate) fn check_shape(&self, params: &MlpParams<T>) -> Result<()> {
        if self.matches(params) {
            Ok(())
        } else {
            Err(Error::Config("gradient shapes do not match adapter".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(dim: usize, hidden: usize, seed: u64) -> MlpParams<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = MlpParams::random(dim, hidden, Activation::Relu, &mut rng);
        // non-zero biases so the bias paths are exercised
        p.layer1_bias = normal_vec(&mut rng, hidden, 0.3);
        p.layer2_bias = normal_vec(&mut rng, dim, 0.3);
        p
    }

    #[test]
    fn zero_params_give_zero_output() {
        let p = MlpParams::<f64>::zeros(4, 8, Activation::Relu);
        let (out, _) = p.forward(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(out, vec![0.0; 4]);
    }

    #[test]
    fn identity_params_reproduce_input() {
        let p = MlpParams::<f64>::identity(3, 5).unwrap();
        let x = [0.25, -1.5, 7.0];
        assert_eq!(p.apply(&x).unwrap(), x.to_vec());
        assert!(MlpParams::<f64>::identity(5, 3).is_err());
    }

    #[test]
    fn forward_matches_hand_evaluation() {
        let p = random_params(5, 7, 11);
        let x = [0.3, -0.2, 0.9, -1.1, 0.05];
        let (out, _) = p.forward(&x).unwrap();
        let mut hidden = [0.0; 7];
        for j in 0..7 {
            let mut s = p.layer1_bias[j];
            for i in 0..5 {
                s += p.layer1_weights.get(j, i) * x[i];
            }
            hidden[j] = if s > 0.0 { s } else { 0.0 };
        }
        for i in 0..5 {
            let mut s = p.layer2_bias[i];
            for j in 0..7 {
                s += p.layer2_weights.get(i, j) * hidden[j];
            }
            assert!((out[i] - s).abs() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p = MlpParams::<f64>::zeros(4, 8, Activation::Relu);
        assert!(matches!(p.forward(&[1.0; 3]), Err(Error::Config(_))));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let p = random_params(4, 6, 3);
        let (_, cache) = p.forward(&[0.1, 0.2, -0.3, 0.4]).unwrap();
        assert!(p.backward(&cache, &[0.0; 4]).unwrap().is_zero());
    }

    #[test]
    fn backward_is_linear_in_upstream_gradient() {
        let p = random_params(4, 6, 5);
        let (_, cache) = p.forward(&[0.1, 0.2, -0.3, 0.4]).unwrap();
        let g = [0.5, -1.0, 0.25, 2.0];
        let g2: Vec<f64> = g.iter().map(|v| 2.0 * v).collect();
        let a = p.backward(&cache, &g).unwrap();
        let b = p.backward(&cache, &g2).unwrap();
        for (sa, sb) in a.slices().iter().zip(b.slices()) {
            for (&x, &y) in sa.iter().zip(sb) {
                assert_eq!(2.0 * x, y);
            }
        }
    }

    #[test]
    fn stale_cache_is_rejected() {
        let small = random_params(4, 6, 1);
        let big = random_params(4, 9, 1);
        let (_, cache) = small.forward(&[0.0; 4]).unwrap();
        assert!(matches!(big.backward(&cache, &[1.0; 4]), Err(Error::Internal(_))));
    }

    #[test]
    fn blend_boundaries() {
        let a = random_params(3, 4, 1);
        let b = random_params(3, 4, 2);
        let mut keep = a.clone();
        keep.blend_towards(&b, 1.0).unwrap();
        assert_eq!(keep, a);
        let mut copy = a.clone();
        copy.blend_towards(&b, 0.0).unwrap();
        assert_eq!(copy, b);
    }
}
