use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use seqopt_core::agents::{AgentConfig, Variant};
use seqopt_core::environments::{
    BridgeEnv, ClassifierConfig, HiddenEmbeddingEnv, RewardOracle, SyntheticClassifierEnv, TabularEnv,
};
use seqopt_core::frozen_lm::ModelConfig;
use seqopt_core::{Error, Result};

/// Environment variable holding a comma-separated seed list; overrides `seeds` from the file.
pub const SEED_ENV_VAR: &str = "SEQOPT_SEED";

/// Which reward oracle to build. `|V|` always comes from `model.vocab_size`
/// and `L` from `agent.prompt_length`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvironmentSpec {
    HiddenEmbedding {
        #[serde(default = "default_env_width")]
        embed_dim: usize,
        #[serde(default = "default_env_width")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    /// `vocab_size` and `length` inside are overwritten from the model and agent.
    Classifier(ClassifierConfig),
    /// Either a table file (`path`) or a uniform random table (`random_seed`).
    Tabular {
        #[serde(default)]
        path: Option<PathBuf>,
        #[serde(default)]
        random_seed: Option<u64>,
    },
    Bridge {
        program: String,
        #[serde(default)]
        args: Vec<String>,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_env_width() -> usize {
    32
}

fn default_timeout_ms() -> u64 {
    10_000
}

impl Default for EnvironmentSpec {
    fn default() -> Self {
        EnvironmentSpec::HiddenEmbedding { embed_dim: 32, dim: 32, seed: 0 }
    }
}

impl EnvironmentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvironmentSpec::HiddenEmbedding { .. } => "hidden_embedding",
            EnvironmentSpec::Classifier(_) => "classifier",
            EnvironmentSpec::Tabular { .. } => "tabular",
            EnvironmentSpec::Bridge { .. } => "bridge",
        }
    }

    /// Builds a fresh oracle. Each worker calls this once, so nothing is shared between seeds.
    pub fn build(&self, vocab_size: usize, length: usize) -> Result<Box<dyn RewardOracle>> {
        Ok(match self {
            EnvironmentSpec::HiddenEmbedding { embed_dim, dim, seed } => {
                Box::new(HiddenEmbeddingEnv::new(vocab_size, *embed_dim, *dim, length, *seed)?)
            }
            EnvironmentSpec::Classifier(cfg) => {
                let mut cfg = cfg.clone();
                cfg.vocab_size = vocab_size;
                cfg.length = length;
                Box::new(SyntheticClassifierEnv::new(cfg)?)
            }
            EnvironmentSpec::Tabular { path, random_seed } => {
                let env = match (path, random_seed) {
                    (Some(p), None) => TabularEnv::load(p, Some(vocab_size))?,
                    (None, Some(s)) => TabularEnv::random(vocab_size, length, *s)?,
                    _ => {
                        return Err(Error::Config(
                            "environment: tabular needs exactly one of `path` or `random_seed`".into(),
                        ))
                    }
                };
                if env.length() != length {
                    return Err(Error::Config(format!(
                        "environment: table has length {} but agent.prompt_length = {length}",
                        env.length()
                    )));
                }
                Box::new(env)
            }
            EnvironmentSpec::Bridge { program, args, timeout_ms } => Box::new(BridgeEnv::spawn(
                program,
                args,
                vocab_size,
                length,
                Duration::from_millis(*timeout_ms),
            )?),
        })
    }

    fn validate(&self) -> Result<()> {
        match self {
            EnvironmentSpec::HiddenEmbedding { embed_dim, dim, .. } => {
                if *embed_dim == 0 || *dim == 0 {
                    return Err(Error::Config("environment.embed_dim and environment.dim must be positive".into()));
                }
            }
            EnvironmentSpec::Classifier(c) => {
                if c.classes < 2 || c.examples_per_class == 0 {
                    return Err(Error::Config(
                        "environment.classes must be >= 2 and environment.examples_per_class >= 1".into(),
                    ));
                }
            }
            EnvironmentSpec::Tabular { path, random_seed } => {
                if path.is_some() == random_seed.is_some() {
                    return Err(Error::Config(
                        "environment: tabular needs exactly one of `path` or `random_seed`".into(),
                    ));
                }
            }
            EnvironmentSpec::Bridge { program, timeout_ms, .. } => {
                if program.is_empty() {
                    return Err(Error::Config("environment.program must not be empty".into()));
                }
                if *timeout_ms == 0 {
                    return Err(Error::Config("environment.timeout_ms must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

/// One experiment: an environment, a model, an agent (optionally rewritten by
/// a named variant), an iteration budget and a list of seeds.
///
/// Defaults: hidden-embedding environment, [`ModelConfig::default`],
/// [`AgentConfig::default`], no variant, 1000 iterations, seeds `[0]`,
/// output directory `runs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub model: ModelConfig,
    pub agent: AgentConfig,
    pub variant: Option<Variant>,
    pub iterations: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            environment: EnvironmentSpec::default(),
            model: ModelConfig::default(),
            agent: AgentConfig::default(),
            variant: None,
            iterations: 1000,
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("config: cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Applies `SEQOPT_SEED` when it is set.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Ok(value) = std::env::var(SEED_ENV_VAR) {
            self.seeds = parse_seed_list(&value).map_err(|e| Error::Config(format!("{SEED_ENV_VAR}: {e}")))?;
        }
        Ok(())
    }

    /// Name used for output subdirectories and report rows.
    pub fn label(&self) -> String {
        self.variant.map(|v| v.name().to_string()).unwrap_or_else(|| "custom".to_string())
    }

    /// Agent settings after the variant (if any) has been applied.
    pub fn effective_agent(&self) -> AgentConfig {
        match self.variant {
            Some(v) => v.apply(&self.agent),
            None => self.agent.clone(),
        }
    }

    /// Per-seed model and agent: the seed drives the agent RNG and shifts the adapter seed.
    pub fn for_seed(&self, seed: u64) -> (ModelConfig, AgentConfig) {
        let mut model = self.model.clone();
        model.adapter_seed = model.adapter_seed.wrapping_add(seed);
        let mut agent = self.effective_agent();
        agent.seed = seed;
        (model, agent)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.effective_agent().validate(self.model.vocab_size)?;
        self.environment.validate()?;
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must not repeat".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything except `output_dir`.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_seed_list(text: &str) -> std::result::Result<Vec<u64>, String> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>().map_err(|_| format!("`{s}` is not a seed")))
        .collect::<std::result::Result<Vec<_>, _>>()
        .and_then(|v| if v.is_empty() { Err("empty seed list".to_string()) } else { Ok(v) })
}
