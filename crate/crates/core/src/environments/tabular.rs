use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_sequence, RewardOracle};
use crate::sparse_math::{apply_filter, greedy_action, BackupKind};
use crate::{Error, Result};

/// Upper bound on `|V|^L` for exhaustive tables and dynamic programming.
pub const MAX_ENUMERATION: usize = 100_000;

fn enumeration_size(vocab_size: usize, length: usize) -> Result<usize> {
    u32::try_from(length)
        .ok()
        .and_then(|l| vocab_size.checked_pow(l))
        .filter(|&n| n <= MAX_ENUMERATION)
        .ok_or_else(|| {
            Error::Config(format!(
                "|V|^L = {vocab_size}^{length} exceeds the enumeration bound {MAX_ENUMERATION}"
            ))
        })
}

/// All `vocab_size^length` sequences in lexicographic order.
pub fn all_sequences(vocab_size: usize, length: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = vocab_size.pow(length as u32);
    (0..total).map(move |mut code| {
        let mut seq = vec![0; length];
        for slot in seq.iter_mut().rev() {
            *slot = code % vocab_size;
            code /= vocab_size;
        }
        seq
    })
}

/// Explicit reward table over token sequences of a fixed length.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularEnv {
    vocab_size: usize,
    length: usize,
    table: BTreeMap<Vec<usize>, f64>,
}

impl TabularEnv {
    pub fn new(vocab_size: usize, length: usize, entries: impl IntoIterator<Item = (Vec<usize>, f64)>) -> Result<Self> {
        if vocab_size < 2 || length == 0 {
            return Err(Error::Config(format!(
                "tabular env needs vocab >= 2 and length >= 1 (got {vocab_size}, {length})"
            )));
        }
        enumeration_size(vocab_size, length)?;
        let mut table = BTreeMap::new();
        for (seq, reward) in entries {
            check_sequence(&seq, vocab_size, length).map_err(|e| Error::Config(e.to_string()))?;
            if !reward.is_finite() {
                return Err(Error::Config(format!("non-finite reward for {seq:?}")));
            }
            table.insert(seq, reward);
        }
        Ok(Self {
            vocab_size,
            length,
            table,
        })
    }

    pub fn from_fn(vocab_size: usize, length: usize, mut reward: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        enumeration_size(vocab_size, length)?;
        let entries: Vec<_> = all_sequences(vocab_size, length)
            .map(|s| {
                let r = reward(&s);
                (s, r)
            })
            .collect();
        Self::new(vocab_size, length, entries)
    }

    /// Every sequence gets an independent `Uniform[0, 1)` reward.
    pub fn random(vocab_size: usize, length: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_fn(vocab_size, length, |_| rng.random::<f64>())
    }

    /// Parses lines of `<token> ... <token> <reward>`; `#` starts a comment.
    /// When `vocab_size` is `None` it is one more than the largest token seen.
    pub fn parse(text: &str, vocab_size: Option<usize>) -> Result<Self> {
        let mut entries = Vec::new();
        let mut length = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| Error::Config(format!("table line {}: {what}", lineno + 1));
            if fields.len() < 2 {
                return Err(bad("expected at least one token and a reward"));
            }
            let (tokens, reward) = fields.split_at(fields.len() - 1);
            let seq = tokens
                .iter()
                .map(|t| t.parse::<usize>().map_err(|_| bad(&format!("bad token {t:?}"))))
                .collect::<Result<Vec<_>>>()?;
            let reward: f64 = reward[0].parse().map_err(|_| bad(&format!("bad reward {:?}", reward[0])))?;
            match length {
                None => length = Some(seq.len()),
                Some(l) if l != seq.len() => return Err(bad("inconsistent sequence length")),
                _ => {}
            }
            entries.push((seq, reward));
        }
        let length = length.ok_or_else(|| Error::Config("empty reward table".into()))?;
        let vocab = vocab_size.unwrap_or_else(|| {
            entries
                .iter()
                .flat_map(|(s, _)| s.iter().copied())
                .max()
                .map_or(2, |m| (m + 1).max(2))
        });
        Self::new(vocab, length, entries)
    }

    pub fn load(path: impl AsRef<Path>, vocab_size: Option<usize>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, vocab_size)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (seq, r) in &self.table {
            let tokens: Vec<String> = seq.iter().map(|t| t.to_string()).collect();
            writeln!(out, "{} {}", tokens.join(" "), r).expect("write to string");
        }
        out
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn is_complete(&self) -> bool {
        self.table.len() == self.vocab_size.pow(self.length as u32)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.table.iter().map(|(s, &r)| (s.as_slice(), r))
    }

    pub fn tabular_reward(&self, tokens: &[usize]) -> Result<f64> {
        self.table
            .get(tokens)
            .copied()
            .ok_or_else(|| Error::Config(format!("reward table has no entry for {tokens:?}")))
    }

    pub fn max_reward(&self) -> Option<f64> {
        self.table.values().copied().reduce(f64::max)
    }
}

impl RewardOracle for TabularEnv {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn prompt_length(&self) -> usize {
        self.length
    }

    fn evaluate(&mut self, tokens: &[usize]) -> Result<f64> {
        check_sequence(tokens, self.vocab_size, self.length)?;
        self.tabular_reward(tokens)
    }
}

/// Exact action values for every prefix of length `0..L`.
#[derive(Clone, Debug, PartialEq)]
pub struct DpTable {
    vocab_size: usize,
    length: usize,
    q: BTreeMap<Vec<usize>, Vec<f64>>,
    masks: BTreeMap<Vec<usize>, Vec<bool>>,
}

impl DpTable {
    pub fn q(&self, prefix: &[usize]) -> Option<&[f64]> {
        self.q.get(prefix).map(Vec::as_slice)
    }

    /// Ignored-token mask at `prefix`, when the table was built with filtering.
    pub fn mask(&self, prefix: &[usize]) -> Option<&[bool]> {
        self.masks.get(prefix).map(Vec::as_slice)
    }

    pub fn prefixes(&self) -> impl Iterator<Item = &[usize]> {
        self.q.keys().map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], &[f64])> {
        self.q.iter().map(|(p, q)| (p.as_slice(), q.as_slice()))
    }

    /// Highest-valued kept action at `prefix`; ties to the lowest index.
    pub fn optimal_action(&self, prefix: &[usize]) -> Result<usize> {
        let q = self
            .q(prefix)
            .ok_or_else(|| Error::Input(format!("no prefix {prefix:?} in table")))?;
        match self.mask(prefix) {
            Some(mask) => greedy_action(apply_filter(q, mask)?.values()),
            None => greedy_action(q),
        }
    }

    pub fn greedy_sequence(&self) -> Result<Vec<usize>> {
        let mut seq = Vec::with_capacity(self.length);
        while seq.len() < self.length {
            let a = self.optimal_action(&seq)?;
            seq.push(a);
        }
        Ok(seq)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn length(&self) -> usize {
        self.length
    }
}

/// Backward induction with entropy-regularized backups.
///
/// Terminal layer: `Q(z_{0:L-2}, z) = R(z_{0:L-1})`. Earlier layers:
/// `Q(p, z) = gamma · alpha · V(F[Q(p+z, ·)] / alpha)` where `V` is spmax or
/// log-sum-exp and `F` applies the mask of `p+z` when `masks` is given.
pub fn dp_optimal_q(
    env: &TabularEnv,
    alpha: f64,
    gamma: f64,
    backup: BackupKind,
    masks: Option<&dyn Fn(&[usize]) -> Result<Vec<bool>>>,
) -> Result<DpTable> {
    backward_induction(env, gamma, masks, |q| backup.soft_value(q, alpha))
}

/// Plain hard-max backward induction (the `alpha → 0` limit of either backup).
pub fn max_backup_q(env: &TabularEnv, gamma: f64) -> Result<DpTable> {
    backward_induction(env, gamma, None, |q| {
        Ok(q.iter().copied().filter(|v| !crate::Real::is_sentinel(*v)).fold(f64::NEG_INFINITY, f64::max))
    })
}

fn backward_induction(
    env: &TabularEnv,
    gamma: f64,
    masks: Option<&dyn Fn(&[usize]) -> Result<Vec<bool>>>,
    value: impl Fn(&[f64]) -> Result<f64>,
) -> Result<DpTable> {
    enumeration_size(env.vocab_size, env.length)?;
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if !env.is_complete() {
        return Err(Error::Config("dynamic programming needs a complete reward table".into()));
    }
    let v = env.vocab_size;
    let mut q: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
    let mut mask_table: BTreeMap<Vec<usize>, Vec<bool>> = BTreeMap::new();
    for depth in (0..env.length).rev() {
        for prefix in all_sequences(v, depth) {
            let mut row = Vec::with_capacity(v);
            for z in 0..v {
                let mut next = prefix.clone();
                next.push(z);
                let entry = if depth + 1 == env.length {
                    env.tabular_reward(&next)?
                } else {
                    let next_q = &q[&next];
                    let soft = match mask_table.get(&next) {
                        Some(mask) => value(apply_filter(next_q, mask)?.values())?,
                        None => value(next_q)?,
                    };
                    gamma * soft
                };
                row.push(entry);
            }
            if let Some(f) = masks {
                let mask = f(&prefix)?;
                if mask.len() != v {
                    return Err(Error::Config("filter mask length differs from vocabulary".into()));
                }
                mask_table.insert(prefix.clone(), mask);
            }
            q.insert(prefix, row);
        }
    }
    Ok(DpTable {
        vocab_size: v,
        length: env.length,
        q,
        masks: mask_table,
    })
}
