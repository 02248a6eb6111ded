use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ignorable_from_logits, FrozenEncoder, IgnorableSet, LmHead};
use crate::numkit::{dot, Activation, AdamState, MlpCache, MlpGradients, MlpParams};
use crate::{Error, Real, Result};

/// Dimensions, seeds and optimizer settings of a [`QFunctionModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Width of the frozen token embeddings.
    pub embed_dim: usize,
    /// `dim(E)`: width of encodings, adapter input/output and head rows.
    pub dim: usize,
    pub hidden: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub encoder_seed: u64,
    pub head_seed: u64,
    pub adapter_seed: u64,
    /// Identity-padded head with `dim >= vocab_size`: every Q-table is exactly representable.
    pub tabular: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 2000,
            embed_dim: 32,
            dim: 32,
            hidden: 256,
            activation: Activation::Relu,
            learning_rate: 5e-5,
            encoder_seed: 0,
            head_seed: 1,
            adapter_seed: 2,
            tabular: false,
        }
    }
}

impl ModelConfig {
    /// Tabular-mode configuration for tiny vocabularies.
    pub fn tabular(vocab_size: usize, hidden: usize) -> Self {
        let dim = vocab_size.max(2);
        Self {
            vocab_size,
            embed_dim: dim,
            dim,
            hidden,
            tabular: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config(format!("model.vocab_size must be >= 2, got {}", self.vocab_size)));
        }
        if self.embed_dim == 0 || self.dim == 0 || self.hidden == 0 {
            return Err(Error::Config("model.embed_dim, model.dim and model.hidden must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "model.learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.tabular && self.dim < self.vocab_size {
            return Err(Error::Config(format!(
                "model.tabular requires dim >= vocab_size ({} < {})",
                self.dim, self.vocab_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
struct FrozenParts<T> {
    encoder: FrozenEncoder<T>,
    head: LmHead<T>,
}

/// `Q(prefix, ·) = W · adapter(encode(prefix))` with only the adapter trainable.
#[derive(Clone, Debug)]
pub struct QFunctionModel<T> {
    frozen: Arc<FrozenParts<T>>,
    adapter: MlpParams<T>,
    optimizer: AdamState<T>,
}

/// Summed TD gradients of a batch, applied as one averaged step.
#[derive(Clone, Debug)]
pub struct GradientAccumulator<T> {
    grads: MlpGradients<T>,
    loss_sum: T,
    count: usize,
}

impl<T: Real> GradientAccumulator<T> {
    pub fn gradients(&self) -> &MlpGradients<T> {
        &self.grads
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean_loss(&self) -> T {
        if self.count == 0 {
            T::zero()
        } else {
            self.loss_sum / T::from_usize(self.count).expect("count")
        }
    }

    /// Gradient of the mean loss.
    pub fn mean_gradients(&self) -> MlpGradients<T> {
        let mut g = self.grads.clone();
        if self.count > 0 {
            g.scale(T::one() / T::from_usize(self.count).expect("count"));
        }
        g
    }
}

impl<T: Real> QFunctionModel<T> {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let encoder = FrozenEncoder::new(config.vocab_size, config.embed_dim, config.dim, config.encoder_seed)?;
        let head = if config.tabular {
            LmHead::identity_padded(config.vocab_size, config.dim)?
        } else {
            LmHead::random(config.vocab_size, config.dim, config.head_seed)?
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.adapter_seed);
        let adapter = MlpParams::random(config.dim, config.hidden, config.activation, &mut rng);
        Self::from_parts(encoder, head, adapter, T::lit(config.learning_rate))
    }

    pub fn from_parts(encoder: FrozenEncoder<T>, head: LmHead<T>, adapter: MlpParams<T>, learning_rate: T) -> Result<Self> {
        if encoder.vocab_size() != head.vocab_size() {
            return Err(Error::Config(format!(
                "encoder vocabulary {} differs from head vocabulary {}",
                encoder.vocab_size(),
                head.vocab_size()
            )));
        }
        if encoder.dim() != head.dim() || adapter.dim() != head.dim() || adapter.layer2_bias.len() != head.dim() {
            return Err(Error::Config(format!(
                "dimension mismatch: encoder {}, adapter {}, head {}",
                encoder.dim(),
                adapter.dim(),
                head.dim()
            )));
        }
        let optimizer = AdamState::new(&adapter, learning_rate);
        Ok(Self {
            frozen: Arc::new(FrozenParts { encoder, head }),
            adapter,
            optimizer,
        })
    }

    pub fn encoder(&self) -> &FrozenEncoder<T> {
        &self.frozen.encoder
    }

    pub fn head(&self) -> &LmHead<T> {
        &self.frozen.head
    }

    pub fn adapter(&self) -> &MlpParams<T> {
        &self.adapter
    }

    /// Replaces the adapter and resets the optimizer moments.
    pub fn set_adapter(&mut self, adapter: MlpParams<T>) -> Result<()> {
        if adapter.dim() != self.adapter.dim() || adapter.hidden() != self.adapter.hidden() {
            return Err(Error::Config("replacement adapter has a different shape".into()));
        }
        self.optimizer = AdamState::new(&adapter, self.optimizer.learning_rate);
        self.adapter = adapter;
        Ok(())
    }

    pub fn optimizer(&self) -> &AdamState<T> {
        &self.optimizer
    }

    pub fn vocab_size(&self) -> usize {
        self.frozen.head.vocab_size()
    }

    pub fn dim(&self) -> usize {
        self.frozen.head.dim()
    }

    /// Whether `other` uses the very same frozen encoder and head.
    pub fn shares_frozen_parts(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.frozen, &other.frozen)
    }

    pub fn encode_prefix(&self, prefix: &[usize]) -> Result<Vec<T>> {
        self.frozen.encoder.encode_prefix(prefix)
    }

    /// `W · e`, without the adapter.
    pub fn base_logits(&self, encoding: &[T]) -> Result<Vec<T>> {
        self.frozen.head.logits(encoding)
    }

    pub fn q_from_encoding(&self, encoding: &[T]) -> Result<Vec<T>> {
        self.q_from_encoding_with(&self.adapter, encoding)
    }

    /// Q-values using an arbitrary adapter (e.g. a target network) on the shared frozen parts.
    pub fn q_from_encoding_with(&self, adapter: &MlpParams<T>, encoding: &[T]) -> Result<Vec<T>> {
        let adapted = adapter.apply(encoding)?;
        self.frozen.head.logits(&adapted)
    }

    pub fn q_values(&self, prefix: &[usize]) -> Result<Vec<T>> {
        self.q_from_encoding(&self.encode_prefix(prefix)?)
    }

    pub fn q_action(&self, encoding: &[T], action: usize) -> Result<T> {
        self.frozen.encoder.check_token(action)?;
        let adapted = self.adapter.apply(encoding)?;
        Ok(dot(self.frozen.head.row(action), &adapted))
    }

    pub fn ignorable_set(&self, prefix: &[usize], k: usize) -> Result<IgnorableSet> {
        self.ignorable_from_encoding(&self.encode_prefix(prefix)?, k)
    }

    pub fn ignorable_from_encoding(&self, encoding: &[T], k: usize) -> Result<IgnorableSet> {
        ignorable_from_logits(&self.base_logits(encoding)?, k)
    }

    pub fn accumulator(&self) -> GradientAccumulator<T> {
        GradientAccumulator {
            grads: MlpGradients::zeros_like(&self.adapter),
            loss_sum: T::zero(),
            count: 0,
        }
    }

    fn forward_action(&self, encoding: &[T], action: usize) -> Result<(T, MlpCache<T>)> {
        self.frozen.encoder.check_token(action)?;
        let (adapted, cache) = self.adapter.forward(encoding)?;
        Ok((dot(self.frozen.head.row(action), &adapted), cache))
    }

    /// Adds the gradient of `(Q(e, action) − target)²` to `acc`; returns the residual.
    ///
    /// The target is a constant: no gradient flows into it.
    pub fn accumulate_td(&self, acc: &mut GradientAccumulator<T>, encoding: &[T], action: usize, target: T) -> Result<T> {
        if !target.is_finite() {
            return Err(Error::Numeric(format!("non-finite TD target {target}")));
        }
        let (q, cache) = self.forward_action(encoding, action)?;
        let residual = q - target;
        let two = T::lit(2.0);
        self.adapter
            .accumulate_backward(&cache, self.frozen.head.row(action), two * residual, &mut acc.grads)?;
        acc.loss_sum += residual * residual;
        acc.count += 1;
        Ok(residual)
    }

    /// Squared TD residual and its adapter gradient for one sample.
    pub fn td_gradient(&self, prefix: &[usize], action: usize, target: T) -> Result<(T, MlpGradients<T>)> {
        let mut acc = self.accumulator();
        let e = self.encode_prefix(prefix)?;
        let r = self.accumulate_td(&mut acc, &e, action, target)?;
        Ok((r * r, acc.grads))
    }

    /// One Adam step on the mean loss of `acc`; returns that mean loss.
    pub fn step_accumulated(&mut self, acc: &GradientAccumulator<T>) -> Result<T> {
        if acc.count == 0 {
            return Err(Error::Config("cannot step on an empty batch".into()));
        }
        let grads = acc.mean_gradients();
        self.optimizer.step(&mut self.adapter, &grads)?;
        Ok(acc.mean_loss())
    }

    /// One optimizer step on `(Q(prefix, action) − target)²`; returns the loss before the step.
    pub fn train_adapter_step(&mut self, prefix: &[usize], action: usize, target: T) -> Result<T> {
        let e = self.encode_prefix(prefix)?;
        let mut acc = self.accumulator();
        self.accumulate_td(&mut acc, &e, action, target)?;
        self.step_accumulated(&acc)
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            format: Checkpoint::<T>::FORMAT.to_string(),
            version: Checkpoint::<T>::VERSION,
            vocab_size: self.vocab_size(),
            embed_dim: self.encoder().embed_dim(),
            dim: self.dim(),
            hidden: self.adapter.hidden(),
            encoder: self.frozen.encoder.clone(),
            head: self.frozen.head.clone(),
            adapter: self.adapter.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint<T>) -> Result<Self> {
        if ckpt.format != Checkpoint::<T>::FORMAT || ckpt.version != Checkpoint::<T>::VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                ckpt.format, ckpt.version
            )));
        }
        let mut model = Self::from_parts(ckpt.encoder, ckpt.head, ckpt.adapter, ckpt.optimizer.learning_rate)?;
        if model.vocab_size() != ckpt.vocab_size || model.dim() != ckpt.dim || model.adapter.hidden() != ckpt.hidden {
            return Err(Error::Config("checkpoint header disagrees with its arrays".into()));
        }
        ckpt.optimizer.first_moment.check_shape(&model.adapter)?;
        model.optimizer = ckpt.optimizer;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

/// Self-describing JSON checkpoint: header, seeds and every parameter array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Checkpoint<T> {
    pub format: String,
    pub version: u32,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub dim: usize,
    pub hidden: usize,
    pub encoder: FrozenEncoder<T>,
    pub head: LmHead<T>,
    pub adapter: MlpParams<T>,
    pub optimizer: AdamState<T>,
}

impl<T> Checkpoint<T> {
    pub const FORMAT: &'static str = "seqopt-qmodel";
    pub const VERSION: u32 = 1;
}
