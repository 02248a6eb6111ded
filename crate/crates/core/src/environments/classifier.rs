use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_sequence, RewardOracle};
use crate::frozen_lm::FrozenEncoder;
use crate::numkit::{dot, normal_vec, DenseMatrix};
use crate::{Error, Result};

/// Hinge-style classification reward for one example:
/// `lambda1^(1−Correct) · lambda2^Correct · Gap`, where
/// `Gap = P(c) − max_{c'≠c} P(c')` and `Correct = 1[Gap > 0]`.
pub fn piecewise_reward(probs: &[f64], true_class: usize, lambda1: f64, lambda2: f64) -> Result<f64> {
    if probs.len() < 2 || true_class >= probs.len() {
        return Err(Error::Input(format!(
            "class {true_class} invalid for {} class probabilities",
            probs.len()
        )));
    }
    let rival = probs
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != true_class)
        .map(|(_, &p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    let gap = probs[true_class] - rival;
    Ok(if gap > 0.0 { lambda2 * gap } else { lambda1 * gap })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub dim: usize,
    pub length: usize,
    pub classes: usize,
    pub examples_per_class: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub aggregation: Aggregation,
    /// Multiplier on the bilinear class scores before the softmax.
    pub score_scale: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            vocab_size: 2000,
            embed_dim: 32,
            dim: 32,
            length: 5,
            classes: 2,
            examples_per_class: 16,
            lambda1: 180.0,
            lambda2: 200.0,
            aggregation: Aggregation::Mean,
            score_scale: 3.0,
            seed: 0,
        }
    }
}

/// Few-shot classifier stand-in: `P(c | z, x) = softmax_c(s · g(z)ᵀ M_c x)`.
///
/// Labels come from a planted prompt, so that prompt classifies every
/// example correctly.
#[derive(Clone, Debug)]
pub struct SyntheticClassifierEnv {
    config: ClassifierConfig,
    encoder: FrozenEncoder<f64>,
    class_maps: Vec<DenseMatrix<f64>>,
    examples: Vec<(Vec<f64>, usize)>,
    planted: Vec<usize>,
}

impl SyntheticClassifierEnv {
    pub fn new(config: ClassifierConfig) -> Result<Self> {
        if config.classes < 2 || config.examples_per_class == 0 || config.length == 0 {
            return Err(Error::Config(
                "classifier env needs classes >= 2, examples_per_class >= 1 and length >= 1".into(),
            ));
        }
        let encoder = FrozenEncoder::new(config.vocab_size, config.embed_dim, config.dim, config.seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xc1a5_5e5);
        let d = config.dim;
        let class_maps = (0..config.classes)
            .map(|_| DenseMatrix::from_vec(d, d, normal_vec(&mut rng, d * d, 1.0 / (d as f64).sqrt())))
            .collect::<Result<Vec<_>>>()?;
        let planted: Vec<usize> = (0..config.length)
            .map(|_| rng.random_range(0..config.vocab_size))
            .collect();
        let mut env = Self {
            config,
            encoder,
            class_maps,
            examples: Vec::new(),
            planted,
        };
        let reference = env.encoder.encode_prefix(&env.planted)?;
        let mut counts = vec![0usize; env.config.classes];
        let wanted = env.config.examples_per_class;
        let mut attempts = 0usize;
        while counts.iter().any(|&c| c < wanted) {
            attempts += 1;
            if attempts > 10_000 * env.config.classes * wanted {
                return Err(Error::Config("could not balance synthetic classes; try another seed".into()));
            }
            let x: Vec<f64> = normal_vec(&mut rng, d, 1.0 / (d as f64).sqrt());
            let label = argmax(&env.scores(&reference, &x)?);
            if counts[label] < wanted {
                counts[label] += 1;
                env.examples.push((x, label));
            }
        }
        Ok(env)
    }

    fn scores(&self, sequence_embedding: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.class_maps
            .iter()
            .map(|m| Ok(self.config.score_scale * dot(sequence_embedding, &m.matvec(x)?)))
            .collect()
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn planted_prompt(&self) -> &[usize] {
        &self.planted
    }

    pub fn example_count(&self) -> usize {
        self.examples.len()
    }

    /// `P(· | z, x_i)` for example `i`.
    pub fn probabilities(&self, tokens: &[usize], example: usize) -> Result<Vec<f64>> {
        let u = self.encoder.encode_prefix(tokens)?;
        let (x, _) = self
            .examples
            .get(example)
            .ok_or_else(|| Error::Input(format!("no example {example}")))?;
        Ok(softmax(&self.scores(&u, x)?))
    }

    pub fn classification_reward(&self, tokens: &[usize]) -> Result<f64> {
        check_sequence(tokens, self.config.vocab_size, self.config.length)?;
        let u = self.encoder.encode_prefix(tokens)?;
        let mut total = 0.0;
        for (x, label) in &self.examples {
            let p = softmax(&self.scores(&u, x)?);
            total += piecewise_reward(&p, *label, self.config.lambda1, self.config.lambda2)?;
        }
        Ok(match self.config.aggregation {
            Aggregation::Mean => total / self.examples.len() as f64,
            Aggregation::Sum => total,
        })
    }

    /// Fraction of examples whose true class has the highest probability.
    pub fn accuracy(&self, tokens: &[usize]) -> Result<f64> {
        let u = self.encoder.encode_prefix(tokens)?;
        let mut hits = 0usize;
        for (x, label) in &self.examples {
            if argmax(&self.scores(&u, x)?) == *label {
                hits += 1;
            }
        }
        Ok(hits as f64 / self.examples.len() as f64)
    }
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|&x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

impl RewardOracle for SyntheticClassifierEnv {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn prompt_length(&self) -> usize {
        self.config.length
    }

    fn evaluate(&mut self, tokens: &[usize]) -> Result<f64> {
        self.classification_reward(tokens)
    }
}
