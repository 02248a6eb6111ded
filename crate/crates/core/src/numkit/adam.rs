use serde::{Deserialize, Serialize};

use super::{MlpGradients, MlpParams};
use crate::{Error, Real, Result};

/// Adam optimizer state for one adapter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct AdamState<T> {
    pub first_moment: MlpGradients<T>,
    pub second_moment: MlpGradients<T>,
    pub step_count: u64,
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Real> AdamState<T> {
    /// Zero moments with `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`.
    pub fn new(params: &MlpParams<T>, learning_rate: T) -> Self {
        Self {
            first_moment: MlpGradients::zeros_like(params),
            second_moment: MlpGradients::zeros_like(params),
            step_count: 0,
            learning_rate,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
        }
    }

    /// One bias-corrected Adam update of `params` along `grads`.
    pub fn step(&mut self, params: &mut MlpParams<T>, grads: &MlpGradients<T>) -> Result<()> {
        grads.check_shape(params)?;
        self.first_moment.check_shape(params)?;
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient passed to Adam".into()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let correction1 = T::one() - self.beta1.powi(t);
        let correction2 = T::one() - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);

        let moments = self
            .first_moment
            .slices_mut()
            .into_iter()
            .zip(self.second_moment.slices_mut());
        for ((param, grad), (m, v)) in params.slices_mut().into_iter().zip(grads.slices()).zip(moments) {
            for i in 0..param.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (T::one() - b1) * g;
                v[i] = b2 * v[i] + (T::one() - b2) * g * g;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Activation;

    fn scalar_params(value: f64) -> MlpParams<f64> {
        let mut p = MlpParams::zeros(1, 1, Activation::Relu);
        p.layer2_bias[0] = value;
        p
    }

    fn scalar_grad(p: &MlpParams<f64>, g: f64) -> MlpGradients<f64> {
        let mut grads = MlpGradients::zeros_like(p);
        grads.layer2_bias[0] = g;
        grads
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = scalar_params(1.5);
        let mut adam = AdamState::new(&p, 5e-5);
        let before = p.clone();
        for _ in 0..5 {
            let grads = MlpGradients::zeros_like(&p);
            adam.step(&mut p, &grads).unwrap();
        }
        assert_eq!(p, before);
        assert!(adam.first_moment.is_zero() && adam.second_moment.is_zero());
        assert_eq!(adam.step_count, 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // m̂ = g, v̂ = g², so the delta is -lr · g / (|g| + eps).
        for &g in &[0.37, -2.0, 1e-3] {
            let mut p = scalar_params(0.0);
            let mut adam = AdamState::new(&p, 5e-5);
            let grads = scalar_grad(&p, g);
            adam.step(&mut p, &grads).unwrap();
            let expected = -5e-5 * g / (g.abs() + 1e-8);
            assert!((p.layer2_bias[0] - expected).abs() < 1e-18);
        }
    }

    #[test]
    fn two_steps_match_scalar_trace() {
        let (lr, b1, b2, eps, g) = (0.01f64, 0.9f64, 0.999f64, 1e-8f64, 0.5f64);
        let mut p = scalar_params(1.0);
        let mut adam = AdamState::new(&p, lr);
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            let grads = scalar_grad(&p, g);
            adam.step(&mut p, &grads).unwrap();
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            x -= lr * mh / (vh.sqrt() + eps);
            assert!((p.layer2_bias[0] - x).abs() < 1e-15);
        }
    }

    #[test]
    fn nan_gradient_is_rejected() {
        let mut p = scalar_params(0.0);
        let mut adam = AdamState::new(&p, 1e-3);
        let grads = scalar_grad(&p, f64::NAN);
        assert!(matches!(adam.step(&mut p, &grads), Err(Error::Numeric(_))));
        assert_eq!(adam.step_count, 0);
    }
}
