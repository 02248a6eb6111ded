use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use seqopt_core::agents::{AgentState, CurveRecord};
use seqopt_core::environments::RewardOracle;
use seqopt_core::{Error, Result};

use crate::config::ExperimentConfig;

/// Exact column list of every per-seed learning-curve CSV.
pub const CURVE_HEADER: &str = "iteration,episode_reward,greedy_reward,mean_loss,mean_support_size,buffer_size";

/// Builds one oracle for a worker from the experiment config.
pub type OracleFactory = dyn Fn(&ExperimentConfig) -> Result<Box<dyn RewardOracle>> + Sync;

/// Outcome of one seed. `error` is set when the run stopped early; `curve`
/// then holds the iterations that completed.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub config_hash: String,
    pub label: String,
    pub seed: u64,
    pub curve: Vec<CurveRecord>,
    pub final_greedy: f64,
    pub best_so_far: f64,
    pub best_sequence: Vec<usize>,
    pub wall_clock_seconds: f64,
    pub error: Option<RunError>,
}

/// Why a run stopped before its iteration budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunError {
    pub tag: String,
    pub message: String,
    /// Iterations that completed before the failure.
    pub after_iteration: usize,
}

impl RunError {
    fn new(e: &Error, after_iteration: usize) -> Self {
        Self { tag: e.tag().to_string(), message: e.to_string(), after_iteration }
    }
}

impl RunRecord {
    pub fn is_complete(&self) -> bool {
        self.error.is_none()
    }

    /// Running maximum over every reward observed (sampled episodes and greedy evaluations).
    pub fn best_so_far_curve(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.curve
            .iter()
            .map(|r| {
                best = best.max(r.episode_reward).max(r.greedy_reward);
                best
            })
            .collect()
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            config_hash: self.config_hash.clone(),
            label: self.label.clone(),
            seed: self.seed,
            iterations_completed: self.curve.len(),
            final_greedy_reward: Some(self.final_greedy).filter(|v| v.is_finite()),
            best_so_far_reward: Some(self.best_so_far).filter(|v| v.is_finite()),
            best_sequence: self.best_sequence.clone(),
            error: self.error.clone(),
        }
    }
}

/// Machine-readable per-seed summary. Wall-clock time is left out so the file is reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub label: String,
    pub seed: u64,
    pub iterations_completed: usize,
    /// `None` when no iteration completed.
    pub final_greedy_reward: Option<f64>,
    pub best_so_far_reward: Option<f64>,
    pub best_sequence: Vec<usize>,
    pub error: Option<RunError>,
}

pub fn curve_csv(curve: &[CurveRecord]) -> String {
    let mut out = String::with_capacity(64 * (curve.len() + 1));
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for r in curve {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration, r.episode_reward, r.greedy_reward, r.mean_loss, r.mean_support_size, r.buffer_size
        );
    }
    out
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CurveRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::Input("curve CSV header does not match the schema".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Input(format!("curve CSV row {}: {line:?}", i + 1));
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            Ok(CurveRecord {
                iteration: f[0].parse().map_err(|_| bad())?,
                episode_reward: num(f[1])?,
                greedy_reward: num(f[2])?,
                mean_loss: num(f[3])?,
                mean_support_size: num(f[4])?,
                buffer_size: f[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

pub fn curve_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn summary_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.json"))
}

/// Runs every seed with oracles from the configured environment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    run_experiment_with(config, &|cfg: &ExperimentConfig| {
        cfg.environment.build(cfg.model.vocab_size, cfg.agent.prompt_length)
    })
}

/// Runs every seed in its own thread, then writes `<output_dir>/<label>/seed_<s>.{csv,json}`.
///
/// Invalid configs fail before any work starts. A failing environment does not
/// abort the other seeds: the affected record carries the error and its partial curve.
pub fn run_experiment_with(config: &ExperimentConfig, factory: &OracleFactory) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let hash = config.hash();
    let label = config.label();
    let records: Vec<RunRecord> = std::thread::scope(|scope| {
        let workers: Vec<_> = config
            .seeds
            .iter()
            .map(|&seed| {
                let (hash, label) = (hash.clone(), label.clone());
                scope.spawn(move || run_seed(config, factory, seed, hash, label))
            })
            .collect();
        workers
            .into_iter()
            .map(|w| w.join().unwrap_or_else(|_| Err(Error::Internal("worker thread panicked".into()))))
            .collect::<Result<Vec<_>>>()
    })?;
    write_records(&config.output_dir.join(&label), &records)?;
    Ok(records)
}

fn run_seed(
    config: &ExperimentConfig,
    factory: &OracleFactory,
    seed: u64,
    config_hash: String,
    label: String,
) -> Result<RunRecord> {
    let start = Instant::now();
    let (model, agent_cfg) = config.for_seed(seed);
    let mut agent = AgentState::<f64>::new(agent_cfg, &model)?;
    let mut record = RunRecord {
        config_hash,
        label,
        seed,
        curve: Vec::with_capacity(config.iterations),
        final_greedy: f64::NAN,
        best_so_far: f64::NEG_INFINITY,
        best_sequence: Vec::new(),
        wall_clock_seconds: 0.0,
        error: None,
    };
    let mut oracle = match factory(config) {
        Ok(o) => o,
        Err(e) => {
            record.error = Some(RunError::new(&e, 0));
            return Ok(record);
        }
    };
    if oracle.vocab_size() != model.vocab_size || oracle.prompt_length() != config.agent.prompt_length {
        return Err(Error::Config(format!(
            "environment: oracle has |V| = {}, L = {}; config has model.vocab_size = {}, agent.prompt_length = {}",
            oracle.vocab_size(),
            oracle.prompt_length(),
            model.vocab_size,
            config.agent.prompt_length
        )));
    }
    for _ in 0..config.iterations {
        if let Err(e) = step(&mut agent, oracle.as_mut(), &mut record) {
            record.error = Some(RunError::new(&e, record.curve.len()));
            break;
        }
    }
    record.final_greedy = record.curve.last().map_or(f64::NAN, |r| r.greedy_reward);
    record.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(record)
}

fn step(agent: &mut AgentState<f64>, oracle: &mut dyn RewardOracle, record: &mut RunRecord) -> Result<()> {
    let row = agent.train_iteration(oracle)?;
    if let Some((sampled, greedy)) = agent.last_sequences() {
        if row.episode_reward > record.best_so_far && row.episode_reward >= row.greedy_reward {
            record.best_sequence = sampled.to_vec();
        } else if row.greedy_reward > record.best_so_far {
            record.best_sequence = greedy.to_vec();
        }
    }
    record.best_so_far = record.best_so_far.max(row.episode_reward).max(row.greedy_reward);
    record.curve.push(row);
    Ok(())
}

fn write_records(dir: &Path, records: &[RunRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in records {
        fs::write(curve_path(dir, r.seed), curve_csv(&r.curve))?;
        let mut json = serde_json::to_string_pretty(&r.summary())?;
        json.push('\n');
        fs::write(summary_path(dir, r.seed), json)?;
    }
    Ok(())
}
