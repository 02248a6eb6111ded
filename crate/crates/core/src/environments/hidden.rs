use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_sequence, RewardOracle};
use crate::frozen_lm::FrozenEncoder;
use crate::numkit::dot;
use crate::{Error, Result};

/// Cosine similarity; zero when either vector is (numerically) zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Reward is the cosine between the sequence's encoding and a hidden target
/// encoding. With a planted target sequence the global optimum is known.
#[derive(Clone, Debug)]
pub struct HiddenEmbeddingEnv {
    encoder: FrozenEncoder<f64>,
    length: usize,
    target_tokens: Option<Vec<usize>>,
    target_embedding: Vec<f64>,
}

impl HiddenEmbeddingEnv {
    /// Seeded encoder and a planted target sequence drawn uniformly from the vocabulary.
    pub fn new(vocab_size: usize, embed_dim: usize, dim: usize, length: usize, seed: u64) -> Result<Self> {
        if length == 0 {
            return Err(Error::Config("hidden-embedding env needs length >= 1".into()));
        }
        let encoder = FrozenEncoder::new(vocab_size, embed_dim, dim, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_7a46_e7);
        let target: Vec<usize> = (0..length).map(|_| rng.random_range(0..vocab_size)).collect();
        Self::with_target_tokens(encoder, target)
    }

    pub fn with_target_tokens(encoder: FrozenEncoder<f64>, target: Vec<usize>) -> Result<Self> {
        check_sequence(&target, encoder.vocab_size(), target.len())?;
        let target_embedding = encoder.encode_prefix(&target)?;
        Ok(Self {
            encoder,
            length: target.len(),
            target_tokens: Some(target),
            target_embedding,
        })
    }

    pub fn with_target_embedding(encoder: FrozenEncoder<f64>, length: usize, target_embedding: Vec<f64>) -> Result<Self> {
        if target_embedding.len() != encoder.dim() {
            return Err(Error::Config(format!(
                "target embedding has {} entries, encoder dim is {}",
                target_embedding.len(),
                encoder.dim()
            )));
        }
        Ok(Self {
            encoder,
            length,
            target_tokens: None,
            target_embedding,
        })
    }

    pub fn target_tokens(&self) -> Option<&[usize]> {
        self.target_tokens.as_deref()
    }

    pub fn target_embedding(&self) -> &[f64] {
        &self.target_embedding
    }

    pub fn encoder(&self) -> &FrozenEncoder<f64> {
        &self.encoder
    }

    pub fn embedding(&self, tokens: &[usize]) -> Result<Vec<f64>> {
        self.encoder.encode_prefix(tokens)
    }

    pub fn cosine_reward(&self, tokens: &[usize]) -> Result<f64> {
        check_sequence(tokens, self.encoder.vocab_size(), self.length)?;
        Ok(cosine(&self.embedding(tokens)?, &self.target_embedding))
    }
}

impl RewardOracle for HiddenEmbeddingEnv {
    fn vocab_size(&self) -> usize {
        self.encoder.vocab_size()
    }

    fn prompt_length(&self) -> usize {
        self.length
    }

    fn evaluate(&mut self, tokens: &[usize]) -> Result<f64> {
        self.cosine_reward(tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_target_scores_one() {
        let env = HiddenEmbeddingEnv::new(50, 8, 16, 4, 9).unwrap();
        let target = env.target_tokens().unwrap().to_vec();
        assert!((env.cosine_reward(&target).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_target_scores_zero() {
        let encoder = FrozenEncoder::new(10, 4, 6, 1).unwrap();
        let z = [3, 7];
        let g = encoder.encode_prefix(&z).unwrap();
        // Gram-Schmidt an arbitrary vector against g
        let mut t: Vec<f64> = (0..6).map(|i| (i as f64 + 1.0).sin()).collect();
        let coef = dot(&t, &g) / dot(&g, &g);
        for (ti, gi) in t.iter_mut().zip(&g) {
            *ti -= coef * gi;
        }
        let env = HiddenEmbeddingEnv::with_target_embedding(encoder, 2, t).unwrap();
        assert!(env.cosine_reward(&z).unwrap().abs() < 1e-12);
    }

    #[test]
    fn matches_direct_cosine() {
        let env = HiddenEmbeddingEnv::new(30, 5, 7, 3, 2).unwrap();
        let z = [1, 29, 4];
        let g = env.embedding(&z).unwrap();
        let t = env.target_embedding();
        let num: f64 = g.iter().zip(t).map(|(a, b)| a * b).sum();
        let den = g.iter().map(|a| a * a).sum::<f64>().sqrt() * t.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((env.cosine_reward(&z).unwrap() - num / den).abs() < 1e-12);
    }

    #[test]
    fn zero_vector_gives_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let mut env = HiddenEmbeddingEnv::new(30, 5, 7, 3, 2).unwrap();
        assert!(env.evaluate(&[1, 2]).is_err());
        assert!(env.evaluate(&[1, 2, 30]).is_err());
    }
}
