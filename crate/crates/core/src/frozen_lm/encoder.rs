use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::numkit::{normal_vec, DenseMatrix};
use crate::{Error, Real, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabSpec {
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl VocabSpec {
    pub fn new(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::Config(format!("vocabulary needs at least 2 tokens, got {size}")));
        }
        Ok(Self { size, labels: None })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        let mut v = Self::new(labels.len())?;
        v.labels = Some(labels);
        Ok(v)
    }

    pub fn label(&self, token: usize) -> String {
        match &self.labels {
            Some(l) if token < l.len() => l[token].clone(),
            _ => format!("<{token}>"),
        }
    }
}

/// Seeded single-layer tanh recurrence over fixed random token embeddings:
/// `s ← tanh(R · [s; embed(z)] + b)`, starting from `initial_state`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FrozenEncoder<T> {
    embedding_table: DenseMatrix<T>,
    recurrence_weights: DenseMatrix<T>,
    recurrence_bias: Vec<T>,
    initial_state: Vec<T>,
    seed: u64,
}

impl<T: Real> FrozenEncoder<T> {
    pub fn new(vocab_size: usize, embed_dim: usize, dim: usize, seed: u64) -> Result<Self> {
        if vocab_size < 2 || embed_dim == 0 || dim == 0 {
            return Err(Error::Config(format!(
                "encoder dimensions must be positive (vocab {vocab_size}, embed {embed_dim}, dim {dim})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedding_table = DenseMatrix::from_vec(
            vocab_size,
            embed_dim,
            normal_vec(&mut rng, vocab_size * embed_dim, 1.0 / (embed_dim as f64).sqrt()),
        )?;
        // State block has unit-scale rows so the recurrence neither explodes
        // nor forgets immediately; the input block is scaled up so a single
        // token moves the state by O(1).
        let state_scale = 1.0 / (dim as f64).sqrt();
        let input_scale = 1.0;
        let width = dim + embed_dim;
        let mut recurrence = Vec::with_capacity(dim * width);
        for _ in 0..dim {
            recurrence.extend(normal_vec::<T, _>(&mut rng, dim, state_scale));
            recurrence.extend(normal_vec::<T, _>(&mut rng, embed_dim, input_scale));
        }
        let recurrence_weights = DenseMatrix::from_vec(dim, width, recurrence)?;
        let recurrence_bias = normal_vec(&mut rng, dim, 0.1);
        let initial_state = normal_vec::<T, _>(&mut rng, dim, 1.0)
            .into_iter()
            .map(|v| v.tanh())
            .collect();
        Ok(Self {
            embedding_table,
            recurrence_weights,
            recurrence_bias,
            initial_state,
            seed,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding_table.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding_table.cols()
    }

    pub fn dim(&self) -> usize {
        self.initial_state.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn initial_state(&self) -> &[T] {
        &self.initial_state
    }

    pub fn embedding_table(&self) -> &DenseMatrix<T> {
        &self.embedding_table
    }

    pub fn recurrence_weights(&self) -> &DenseMatrix<T> {
        &self.recurrence_weights
    }

    pub fn recurrence_bias(&self) -> &[T] {
        &self.recurrence_bias
    }

    pub fn check_token(&self, token: usize) -> Result<()> {
        if token >= self.vocab_size() {
            return Err(Error::Input(format!(
                "token {token} out of range for vocabulary of size {}",
                self.vocab_size()
            )));
        }
        Ok(())
    }

    /// One recurrence step from `state` after reading `token`.
    pub fn step(&self, state: &[T], token: usize) -> Result<Vec<T>> {
        self.check_token(token)?;
        let mut joined = Vec::with_capacity(self.recurrence_weights.cols());
        joined.extend_from_slice(state);
        joined.extend_from_slice(self.embedding_table.row(token));
        let mut next = self.recurrence_weights.matvec(&joined)?;
        for (v, &b) in next.iter_mut().zip(&self.recurrence_bias) {
            *v = (*v + b).tanh();
        }
        Ok(next)
    }

    pub fn encode_prefix(&self, prefix: &[usize]) -> Result<Vec<T>> {
        prefix
            .iter()
            .try_fold(self.initial_state.clone(), |s, &z| self.step(&s, z))
    }

    /// Encodings of every prefix `tokens[..t]` for `t = 0..=tokens.len()`.
    pub fn prefix_encodings(&self, tokens: &[usize]) -> Result<Vec<Vec<T>>> {
        let mut out = Vec::with_capacity(tokens.len() + 1);
        out.push(self.initial_state.clone());
        for &z in tokens {
            let next = self.step(out.last().expect("non-empty"), z)?;
            out.push(next);
        }
        Ok(out)
    }
}

/// Fixed `|V| × dim` output head; row `i` scores token `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LmHead<T> {
    matrix: DenseMatrix<T>,
    seed: Option<u64>,
}

impl<T: Real> LmHead<T> {
    /// Rows drawn from `N(0, 1/dim)`.
    pub fn random(vocab_size: usize, dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = normal_vec(&mut rng, vocab_size * dim, 1.0 / (dim as f64).sqrt());
        Ok(Self {
            matrix: DenseMatrix::from_vec(vocab_size, dim, values)?,
            seed: Some(seed),
        })
    }

    /// `[I | 0]`: Q-values are the first `|V|` adapter outputs. Needs `dim >= |V|`.
    pub fn identity_padded(vocab_size: usize, dim: usize) -> Result<Self> {
        if dim < vocab_size {
            return Err(Error::Config(format!(
                "identity head needs dim >= vocabulary size ({dim} < {vocab_size})"
            )));
        }
        Ok(Self {
            matrix: DenseMatrix::identity_padded(vocab_size, dim),
            seed: None,
        })
    }

    pub fn from_matrix(matrix: DenseMatrix<T>) -> Self {
        Self { matrix, seed: None }
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn row(&self, token: usize) -> &[T] {
        self.matrix.row(token)
    }

    pub fn logits(&self, embedding: &[T]) -> Result<Vec<T>> {
        self.matrix.matvec(embedding)
    }
}
