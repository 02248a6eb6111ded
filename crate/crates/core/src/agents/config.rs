use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::sparse_math::BackupKind;
use crate::{Error, Result};

/// Regularization, replay and training knobs of an agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Regularization coefficient; the reported reward scale is `1 / alpha`.
    pub alpha: f64,
    pub gamma: f64,
    pub prompt_length: usize,
    /// Tokens ranked below the `top_k`-th base logit are ignorable.
    pub top_k: usize,
    pub buffer_capacity: usize,
    /// Episodes replayed per update when `use_replay` is on.
    pub batch_episodes: usize,
    /// Target update `theta' ← rho · theta' + (1 − rho) · theta`.
    pub polyak_rho: f64,
    pub backup_kind: BackupKind,
    pub use_filter: bool,
    pub use_replay: bool,
    /// Sample only among the `n` highest-Q tokens (RLPrompt's top-n sampling).
    /// Affects sampling only, never targets or greedy decoding.
    pub sample_top_q: Option<usize>,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            gamma: 1.0,
            prompt_length: 5,
            top_k: 400,
            buffer_capacity: 10_000,
            batch_episodes: 16,
            polyak_rho: 0.95,
            backup_kind: BackupKind::Sparsemax,
            use_filter: true,
            use_replay: true,
            sample_top_q: None,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn reward_scale(&self) -> f64 {
        1.0 / self.alpha
    }

    pub fn set_reward_scale(&mut self, scale: f64) {
        self.alpha = 1.0 / scale;
    }

    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("agent.{field}: {why}")));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha", format!("must be positive, got {}", self.alpha));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", format!("must lie in (0, 1], got {}", self.gamma));
        }
        if self.prompt_length == 0 {
            return bad("prompt_length", "must be at least 1".into());
        }
        if self.top_k == 0 || self.top_k > vocab_size {
            return bad("top_k", format!("must lie in 1..={vocab_size}, got {}", self.top_k));
        }
        if self.buffer_capacity == 0 {
            return bad("buffer_capacity", "must be at least 1".into());
        }
        if self.batch_episodes == 0 {
            return bad("batch_episodes", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.polyak_rho) {
            return bad("polyak_rho", format!("must lie in [0, 1], got {}", self.polyak_rho));
        }
        if let Some(n) = self.sample_top_q {
            if n == 0 {
                return bad("sample_top_q", "must be at least 1".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Pin,
    PinNoFluency,
    Rlprompt,
    RlpromptFluency,
    RlpromptRb,
    RlpromptRbFluency,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Pin,
        Variant::PinNoFluency,
        Variant::Rlprompt,
        Variant::RlpromptFluency,
        Variant::RlpromptRb,
        Variant::RlpromptRbFluency,
    ];

    /// Retention of RLPrompt's top-n sampling.
    pub const RLPROMPT_TOP_Q: usize = 256;

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pin => "pin",
            Variant::PinNoFluency => "pin_no_fluency",
            Variant::Rlprompt => "rlprompt",
            Variant::RlpromptFluency => "rlprompt_fluency",
            Variant::RlpromptRb => "rlprompt_rb",
            Variant::RlpromptRbFluency => "rlprompt_rb_fluency",
        }
    }

    /// Applies the variant's backup, filter, replay and sampling switches to `base`.
    pub fn apply(self, base: &AgentConfig) -> AgentConfig {
        use BackupKind::{Logsumexp, Sparsemax};
        let (backup_kind, use_filter, use_replay) = match self {
            Variant::Pin => (Sparsemax, true, true),
            Variant::PinNoFluency => (Sparsemax, false, true),
            Variant::Rlprompt => (Logsumexp, false, false),
            Variant::RlpromptFluency => (Logsumexp, true, false),
            Variant::RlpromptRb => (Logsumexp, false, true),
            Variant::RlpromptRbFluency => (Logsumexp, true, true),
        };
        let sample_top_q = match backup_kind {
            Sparsemax => None,
            Logsumexp => Some(Self::RLPROMPT_TOP_Q),
        };
        AgentConfig {
            backup_kind,
            use_filter,
            use_replay,
            sample_top_q,
            ..base.clone()
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!("unknown variant {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

pub fn make_variant(name: &str, base: &AgentConfig) -> Result<AgentConfig> {
    Ok(name.parse::<Variant>()?.apply(base))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_switches() {
        let base = AgentConfig::default();
        let pin = make_variant("pin", &base).unwrap();
        assert_eq!((pin.backup_kind, pin.use_filter, pin.use_replay), (BackupKind::Sparsemax, true, true));
        let nf = make_variant("pin_no_fluency", &base).unwrap();
        assert_eq!((nf.backup_kind, nf.use_filter, nf.use_replay), (BackupKind::Sparsemax, false, true));
        let rl = make_variant("rlprompt", &base).unwrap();
        assert_eq!((rl.backup_kind, rl.use_filter, rl.use_replay), (BackupKind::Logsumexp, false, false));
        let rlf = make_variant("rlprompt_fluency", &base).unwrap();
        assert_eq!((rlf.use_filter, rlf.use_replay), (true, false));
        let rb = make_variant("rlprompt_rb", &base).unwrap();
        assert_eq!((rb.use_filter, rb.use_replay), (false, true));
        let rbf = make_variant("rlprompt_rb_fluency", &base).unwrap();
        assert_eq!((rbf.backup_kind, rbf.use_filter, rbf.use_replay), (BackupKind::Logsumexp, true, true));
        assert_eq!(rl.sample_top_q, Some(256));
        assert_eq!(pin.sample_top_q, None);
        assert!(matches!(make_variant("pin-ish", &base), Err(Error::Config(_))));
    }

    #[test]
    fn variant_keeps_other_fields() {
        let base = AgentConfig {
            alpha: 0.2,
            prompt_length: 3,
            seed: 9,
            ..AgentConfig::default()
        };
        let v = make_variant("rlprompt_rb", &base).unwrap();
        assert_eq!((v.alpha, v.prompt_length, v.seed), (0.2, 3, 9));
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = AgentConfig::default();
        c.top_k = 5000;
        let msg = c.validate(2000).unwrap_err().to_string();
        assert!(msg.contains("top_k"));
        c.top_k = 10;
        c.gamma = 0.0;
        assert!(c.validate(2000).unwrap_err().to_string().contains("gamma"));
        c.gamma = 1.0;
        c.set_reward_scale(4.0);
        assert_eq!(c.alpha, 0.25);
        assert!(c.validate(2000).is_ok());
    }
}
