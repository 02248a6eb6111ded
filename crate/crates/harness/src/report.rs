use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use seqopt_core::{Error, Result};

use crate::config::ExperimentConfig;
use crate::runner::{run_experiment_with, OracleFactory, RunRecord};

/// Per-seed scalar summarizing a learning curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Greedy reward at the last iteration.
    FinalGreedy,
    /// Highest reward observed by the end of the run.
    BestSoFar,
    /// Mean over iterations of the best-so-far curve.
    Auc,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::FinalGreedy, Metric::BestSoFar, Metric::Auc];

    pub fn name(self) -> &'static str {
        match self {
            Metric::FinalGreedy => "final_greedy",
            Metric::BestSoFar => "best_so_far",
            Metric::Auc => "auc",
        }
    }

    /// Per-iteration values written to the long-format CSV; the scalar can be recomputed from them.
    pub fn curve(self, record: &RunRecord) -> Vec<f64> {
        match self {
            Metric::FinalGreedy => record.curve.iter().map(|r| r.greedy_reward).collect(),
            Metric::BestSoFar | Metric::Auc => record.best_so_far_curve(),
        }
    }

    pub fn scalar(self, record: &RunRecord) -> f64 {
        let curve = self.curve(record);
        match self {
            Metric::FinalGreedy | Metric::BestSoFar => curve.last().copied().unwrap_or(f64::NAN),
            Metric::Auc => mean(&curve),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}; expected final_greedy, best_so_far or auc")))
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Standard error of the mean with the `n - 1` sample deviation; NaN below two values.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupSummary {
    pub label: String,
    pub mean: f64,
    pub se: f64,
    pub per_seed: Vec<(u64, f64)>,
}

impl GroupSummary {
    pub fn from_records(label: &str, records: &[RunRecord], metric: Metric) -> Self {
        let per_seed: Vec<(u64, f64)> = records.iter().map(|r| (r.seed, metric.scalar(r))).collect();
        let values: Vec<f64> = per_seed.iter().map(|p| p.1).collect();
        Self { label: label.to_string(), mean: mean(&values), se: standard_error(&values), per_seed }
    }

    pub fn value_for_seed(&self, seed: u64) -> Option<f64> {
        self.per_seed.iter().find(|p| p.0 == seed).map(|p| p.1)
    }
}

/// Variant-vs-variant table plus the long-format rows it was computed from.
#[derive(Clone, Debug)]
pub struct ComparisonReport {
    pub metric: Metric,
    pub groups: Vec<GroupSummary>,
    pub records: Vec<(String, Vec<RunRecord>)>,
}

impl ComparisonReport {
    pub fn from_records(records: Vec<(String, Vec<RunRecord>)>, metric: Metric) -> Self {
        let groups = records.iter().map(|(l, r)| GroupSummary::from_records(l, r, metric)).collect();
        Self { metric, groups, records }
    }

    pub fn group(&self, label: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.label == label)
    }

    /// `variant,metric,mean,se,n`
    pub fn table_csv(&self) -> String {
        let mut out = String::from("variant,metric,mean,se,n\n");
        for g in &self.groups {
            let _ = writeln!(out, "{},{},{},{},{}", g.label, self.metric, g.mean, g.se, g.per_seed.len());
        }
        out
    }

    /// `variant,seed,iteration,value`, one row per iteration of every run.
    pub fn long_csv(&self) -> String {
        let mut out = String::from("variant,seed,iteration,value\n");
        for (label, records) in &self.records {
            for r in records {
                for (row, value) in r.curve.iter().zip(self.metric.curve(r)) {
                    let _ = writeln!(out, "{label},{},{},{value}", r.seed, row.iteration);
                }
            }
        }
        out
    }

    pub fn text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# metric: {}", self.metric);
        let _ = writeln!(
            out,
            "# one iteration = one sampled episode = one oracle call; greedy evaluations are extra calls"
        );
        let _ = writeln!(out, "{:<22} {:>12} {:>12} {:>4}", "variant", "mean", "se", "n");
        for g in &self.groups {
            let _ = writeln!(out, "{:<22} {:>12.6} {:>12.6} {:>4}", g.label, g.mean, g.se, g.per_seed.len());
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("comparison.csv"), self.table_csv())?;
        fs::write(dir.join("comparison_long.csv"), self.long_csv())?;
        fs::write(dir.join("comparison.txt"), self.text())?;
        Ok(())
    }
}

fn first_failure(records: &[RunRecord]) -> Option<String> {
    records
        .iter()
        .find_map(|r| r.error.as_ref().map(|e| format!("{} seed {}: [{}] {}", r.label, r.seed, e.tag, e.message)))
}

/// Runs each config and reports the metric per variant. The configs must share
/// environment, model, seeds and iteration budget, and have distinct labels.
pub fn compare_variants(configs: &[ExperimentConfig], metric: Metric, factory: &OracleFactory) -> Result<ComparisonReport> {
    let first = configs.first().ok_or_else(|| Error::Config("compare needs at least one config".into()))?;
    for (i, c) in configs.iter().enumerate().skip(1) {
        if c.environment != first.environment || c.model != first.model {
            return Err(Error::Config(format!("config {i}: environment or model differs from config 0")));
        }
        if c.seeds != first.seeds || c.iterations != first.iterations {
            return Err(Error::Config(format!("config {i}: seeds or iterations differ from config 0")));
        }
        if configs[..i].iter().any(|p| p.label() == c.label()) {
            return Err(Error::Config(format!("config {i}: duplicate label {}", c.label())));
        }
    }
    let mut groups = Vec::with_capacity(configs.len());
    for c in configs {
        let records = run_experiment_with(c, factory)?;
        if let Some(msg) = first_failure(&records) {
            return Err(Error::Environment(msg));
        }
        groups.push((c.label(), records));
    }
    let report = ComparisonReport::from_records(groups, metric);
    report.write(&first.output_dir)?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    PromptLength,
    TopK,
    /// `1 / alpha`.
    RewardScale,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::PromptLength => "prompt_length",
            SweepParameter::TopK => "top_k",
            SweepParameter::RewardScale => "reward_scale",
        }
    }

    /// Copy of `base` with the parameter set to `value`, writing under `<output_dir>/<name>_<value>`.
    pub fn apply(self, base: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut cfg = base.clone();
        let as_count = || {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{}: {value} is not a positive integer", self.name())))
            }
        };
        match self {
            SweepParameter::PromptLength => cfg.agent.prompt_length = as_count()?,
            SweepParameter::TopK => cfg.agent.top_k = as_count()?,
            SweepParameter::RewardScale => {
                if !(value.is_finite() && value > 0.0) {
                    return Err(Error::Config(format!("reward_scale: {value} must be positive")));
                }
                cfg.agent.set_reward_scale(value);
            }
        }
        cfg.output_dir = base.output_dir.join(format!("{}_{value}", self.name()));
        Ok(cfg)
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prompt_length" => Ok(SweepParameter::PromptLength),
            "top_k" => Ok(SweepParameter::TopK),
            "reward_scale" => Ok(SweepParameter::RewardScale),
            _ => Err(Error::Config(format!(
                "unknown sweep parameter {s:?}; expected prompt_length, top_k or reward_scale"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepReport {
    pub parameter: SweepParameter,
    pub metric: Metric,
    pub rows: Vec<(f64, GroupSummary)>,
    pub records: Vec<Vec<RunRecord>>,
}

impl SweepReport {
    /// `parameter,value,metric,mean,se,n`
    pub fn csv(&self) -> String {
        let mut out = String::from("parameter,value,metric,mean,se,n\n");
        for (value, g) in &self.rows {
            let _ = writeln!(
                out,
                "{},{value},{},{},{},{}",
                self.parameter,
                self.metric,
                g.mean,
                g.se,
                g.per_seed.len()
            );
        }
        out
    }
}

/// One experiment per value; every run is validated before the first one starts.
pub fn sweep(
    base: &ExperimentConfig,
    parameter: SweepParameter,
    values: &[f64],
    metric: Metric,
    factory: &OracleFactory,
) -> Result<SweepReport> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values.iter().map(|&v| parameter.apply(base, v)).collect::<Result<Vec<_>>>()?;
    for c in &configs {
        c.validate()?;
    }
    let mut rows = Vec::with_capacity(values.len());
    let mut all = Vec::with_capacity(values.len());
    for (c, &value) in configs.iter().zip(values) {
        let records = run_experiment_with(c, factory)?;
        if let Some(msg) = first_failure(&records) {
            return Err(Error::Environment(msg));
        }
        rows.push((value, GroupSummary::from_records(&c.label(), &records, metric)));
        all.push(records);
    }
    let report = SweepReport { parameter, metric, rows, records: all };
    fs::create_dir_all(&base.output_dir)?;
    fs::write(base.output_dir.join(format!("sweep_{parameter}.csv")), report.csv())?;
    Ok(report)
}
