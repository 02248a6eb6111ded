use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AgentConfig, Episode, ReplayBuffer};
use crate::environments::RewardOracle;
use crate::frozen_lm::{ignorable_from_logits, IgnorableSet, ModelConfig, QFunctionModel};
use crate::numkit::MlpParams;
use crate::sparse_math::{apply_filter, greedy_action, ActionDistribution};
use crate::{Error, Real, Result};

/// One row of a learning curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub iteration: u64,
    pub episode_reward: f64,
    pub greedy_reward: f64,
    pub mean_loss: f64,
    pub mean_support_size: f64,
    pub buffer_size: usize,
}

/// Counters over every token drawn by [`AgentState::sample_episode`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SamplingStats {
    pub sampled_tokens: u64,
    /// Sampled tokens that were in their prefix's ignorable set while filtering was on.
    pub retention_violations: u64,
}

/// Online network, target adapter, replay buffer and RNG of one agent.
#[derive(Clone, Debug)]
pub struct AgentState<T> {
    config: AgentConfig,
    online: QFunctionModel<T>,
    target: MlpParams<T>,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    iteration: u64,
    stats: SamplingStats,
    last_support_mean: f64,
    last_sequences: Option<(Vec<usize>, Vec<usize>)>,
}

struct StepPolicy<T> {
    q: Vec<T>,
    ignored: Option<IgnorableSet>,
}

impl<T: Real> AgentState<T> {
    pub fn new(config: AgentConfig, model: &ModelConfig) -> Result<Self> {
        Self::with_model(config, QFunctionModel::new(model)?)
    }

    /// Wraps an existing model; the target adapter starts as a copy of the online one.
    pub fn with_model(config: AgentConfig, online: QFunctionModel<T>) -> Result<Self> {
        config.validate(online.vocab_size())?;
        Ok(Self {
            target: online.adapter().clone(),
            buffer: ReplayBuffer::new(config.buffer_capacity),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            iteration: 0,
            stats: SamplingStats::default(),
            last_support_mean: 0.0,
            last_sequences: None,
            online,
            config,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn online(&self) -> &QFunctionModel<T> {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut QFunctionModel<T> {
        &mut self.online
    }

    pub fn target_adapter(&self) -> &MlpParams<T> {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn sampling_stats(&self) -> SamplingStats {
        self.stats
    }

    /// Adds episodes to the replay buffer without training on them.
    pub fn seed_buffer(&mut self, episodes: impl IntoIterator<Item = Episode>) -> Result<()> {
        for e in episodes {
            self.check_episode(&e)?;
            self.buffer.push(e);
        }
        Ok(())
    }

    fn alpha(&self) -> T {
        T::lit(self.config.alpha)
    }

    fn check_episode(&self, e: &Episode) -> Result<()> {
        if e.tokens.len() != self.config.prompt_length {
            return Err(Error::Input(format!(
                "episode has {} tokens, prompt length is {}",
                e.tokens.len(),
                self.config.prompt_length
            )));
        }
        if !e.reward.is_finite() {
            return Err(Error::Numeric(format!("non-finite episode reward {}", e.reward)));
        }
        Ok(())
    }

    fn ignorable(&self, encoding: &[T]) -> Result<Option<IgnorableSet>> {
        if self.config.use_filter {
            Ok(Some(self.online.ignorable_from_encoding(encoding, self.config.top_k)?))
        } else {
            Ok(None)
        }
    }

    /// Filtered action values from `adapter` at the prefix encoded by `encoding`.
    fn filtered_q(&self, adapter: &MlpParams<T>, encoding: &[T]) -> Result<StepPolicy<T>> {
        let q = self.online.q_from_encoding_with(adapter, encoding)?;
        let ignored = self.ignorable(encoding)?;
        let q = match &ignored {
            Some(set) => apply_filter(&q, set.mask())?.into_values(),
            None => q,
        };
        Ok(StepPolicy { q, ignored })
    }

    fn sampling_distribution(&self, encoding: &[T]) -> Result<(ActionDistribution<T>, Option<IgnorableSet>)> {
        let StepPolicy { q, ignored } = self.filtered_q(self.online.adapter(), encoding)?;
        let q = match self.config.sample_top_q {
            Some(n) if n < q.len() => restrict_to_top(q, n)?,
            _ => q,
        };
        Ok((self.config.backup_kind.policy(&q, self.alpha())?, ignored))
    }

    /// Sampling policy at `prefix`: filtered, possibly top-n restricted, then
    /// sparsemax or softmax of `Q / alpha`.
    pub fn policy_distribution(&self, prefix: &[usize]) -> Result<ActionDistribution<T>> {
        if prefix.len() >= self.config.prompt_length {
            return Err(Error::Input(format!(
                "prefix of length {} is already complete",
                prefix.len()
            )));
        }
        let e = self.online.encode_prefix(prefix)?;
        Ok(self.sampling_distribution(&e)?.0)
    }

    /// Draws a full sequence from the current policy and scores it once.
    pub fn sample_episode(&mut self, oracle: &mut dyn RewardOracle) -> Result<Episode> {
        let encoder = self.online.encoder();
        let mut state = encoder.initial_state().to_vec();
        let mut tokens = Vec::with_capacity(self.config.prompt_length);
        let mut support_total = 0usize;
        for _ in 0..self.config.prompt_length {
            let (dist, ignored) = self.sampling_distribution(&state)?;
            support_total += dist.support_size();
            let u: f64 = self.rng.random();
            let token = dist.sample_with(T::lit(u));
            self.stats.sampled_tokens += 1;
            if ignored.as_ref().is_some_and(|set| set.is_ignored(token)) {
                self.stats.retention_violations += 1;
            }
            state = self.online.encoder().step(&state, token)?;
            tokens.push(token);
        }
        self.last_support_mean = support_total as f64 / self.config.prompt_length as f64;
        let reward = oracle.evaluate(&tokens)?;
        if !reward.is_finite() {
            return Err(Error::Environment(format!("oracle returned non-finite reward {reward}")));
        }
        Ok(Episode { tokens, reward })
    }

    /// Per-step argmax of the filtered online Q-values.
    pub fn greedy_sequence(&self) -> Result<Vec<usize>> {
        let mut state = self.online.encoder().initial_state().to_vec();
        let mut tokens = Vec::with_capacity(self.config.prompt_length);
        for _ in 0..self.config.prompt_length {
            let step = self.filtered_q(self.online.adapter(), &state)?;
            let token = greedy_action(&step.q)?;
            state = self.online.encoder().step(&state, token)?;
            tokens.push(token);
        }
        Ok(tokens)
    }

    fn target_from_encoding(&self, next_encoding: &[T]) -> Result<T> {
        let step = self.filtered_q(&self.target, next_encoding)?;
        let gamma = T::lit(self.config.gamma);
        Ok(gamma * self.config.backup_kind.soft_value(&step.q, self.alpha())?)
    }

    /// Bootstrapped target for the action taken at step `t`: the episode reward
    /// at the last step, otherwise `gamma · alpha · V(F[Q_target(z_{0:t}, ·)] / alpha)`.
    pub fn compute_target(&self, episode: &Episode, t: usize) -> Result<T> {
        self.check_episode(episode)?;
        let last = self.config.prompt_length - 1;
        if t > last {
            return Err(Error::Input(format!("step {t} beyond prompt length")));
        }
        if t == last {
            return Ok(T::lit(episode.reward));
        }
        let e = self.online.encode_prefix(&episode.tokens[..=t])?;
        self.target_from_encoding(&e)
    }

    /// Accumulates TD gradients over every step of every episode and takes a
    /// single optimizer step on the mean squared residual.
    pub fn update_from_batch(&mut self, episodes: &[Episode]) -> Result<f64> {
        if episodes.is_empty() {
            return Err(Error::Config("update_from_batch needs at least one episode".into()));
        }
        let last = self.config.prompt_length - 1;
        let mut acc = self.online.accumulator();
        for episode in episodes {
            self.check_episode(episode)?;
            let encodings = self.online.encoder().prefix_encodings(&episode.tokens)?;
            for t in 0..=last {
                let target = if t == last {
                    T::lit(episode.reward)
                } else {
                    self.target_from_encoding(&encodings[t + 1])?
                };
                self.online.accumulate_td(&mut acc, &encodings[t], episode.tokens[t], target)?;
            }
        }
        Ok(self.online.step_accumulated(&acc)?.as_f64())
    }

    /// Sampled and greedy sequences of the latest [`Self::train_iteration`].
    pub fn last_sequences(&self) -> Option<(&[usize], &[usize])> {
        self.last_sequences.as_ref().map(|(s, g)| (s.as_slice(), g.as_slice()))
    }

    pub fn polyak_update(&mut self) -> Result<()> {
        let rho = T::lit(self.config.polyak_rho);
        self.target.blend_towards(self.online.adapter(), rho)
    }

    /// One outer iteration: collect, store, replay, update, sync target, evaluate greedily.
    pub fn train_iteration(&mut self, oracle: &mut dyn RewardOracle) -> Result<CurveRecord> {
        let episode = self.sample_episode(oracle)?;
        let episode_reward = episode.reward;
        let sampled = episode.tokens.clone();
        let batch = if self.config.use_replay {
            self.buffer.push(episode);
            self.buffer.sample(&mut self.rng, self.config.batch_episodes)
        } else {
            vec![episode]
        };
        let mean_loss = self.update_from_batch(&batch)?;
        self.polyak_update()?;
        let greedy = self.greedy_sequence()?;
        let greedy_reward = oracle.evaluate(&greedy)?;
        self.last_sequences = Some((sampled, greedy));
        self.iteration += 1;
        Ok(CurveRecord {
            iteration: self.iteration,
            episode_reward,
            greedy_reward,
            mean_loss,
            mean_support_size: self.last_support_mean,
            buffer_size: self.buffer.len(),
        })
    }

    /// Off-policy iteration over a fixed dataset: a uniform batch (with replacement),
    /// one update, one target sync. The oracle is not queried.
    pub fn fit_iteration(&mut self, dataset: &[Episode]) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::Config("fit_iteration needs a non-empty dataset".into()));
        }
        let batch: Vec<Episode> = (0..self.config.batch_episodes)
            .map(|_| dataset[self.rng.random_range(0..dataset.len())].clone())
            .collect();
        let loss = self.update_from_batch(&batch)?;
        self.polyak_update()?;
        self.iteration += 1;
        Ok(loss)
    }

    pub fn train(&mut self, oracle: &mut dyn RewardOracle, iterations: usize) -> Result<Vec<CurveRecord>> {
        if iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if oracle.prompt_length() != self.config.prompt_length || oracle.vocab_size() != self.online.vocab_size() {
            return Err(Error::Config(format!(
                "oracle expects |V| = {}, L = {}; agent has |V| = {}, L = {}",
                oracle.vocab_size(),
                oracle.prompt_length(),
                self.online.vocab_size(),
                self.config.prompt_length
            )));
        }
        (0..iterations).map(|_| self.train_iteration(oracle)).collect()
    }
}

/// Keeps the `n` highest non-sentinel values (ties with the n-th kept).
fn restrict_to_top<T: Real>(q: Vec<T>, n: usize) -> Result<Vec<T>> {
    let active: Vec<T> = q.iter().copied().filter(|v| !v.is_sentinel()).collect();
    if active.len() <= n {
        return Ok(q);
    }
    let set = ignorable_from_logits(&active, n)?;
    let mut kept = set.mask().iter();
    Ok(q.into_iter()
        .map(|v| {
            if v.is_sentinel() || *kept.next().expect("mask aligned") {
                T::sentinel()
            } else {
                v
            }
        })
        .collect())
}
