use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use seqopt_core::agents::Variant;
use seqopt_core::{Error, Result};

use crate::config::{parse_seed_list, ExperimentConfig};
use crate::report::{compare_variants, sweep, Metric, SweepParameter};
use crate::runner::{run_experiment, RunRecord};
use crate::selfcheck::run_self_checks;

#[derive(Debug, Parser)]
#[command(name = "seqopt", version, about = "Train and compare token-sequence Q-learning agents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent per seed and write curves and summaries.
    Run(CommonArgs),
    /// Run several variants on the same environment and seeds.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated variant names.
        #[arg(long, value_delimiter = ',', required = true)]
        variants: Vec<String>,
        #[arg(long, default_value = "best_so_far")]
        metric: String,
    },
    /// Repeat the experiment over values of one parameter.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// prompt_length, top_k or reward_scale.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long, default_value = "best_so_far")]
        metric: String,
    },
    /// Run the built-in oracle checks.
    Verify,
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// JSON config; defaults apply to every missing field.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Comma-separated seeds; overrides SEQOPT_SEED and the file.
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// File, then `SEQOPT_SEED`, then flags; validated at the end.
pub fn resolve_config(args: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_seed_env()?;
    if let Some(v) = &args.variant {
        cfg.variant = Some(v.parse::<Variant>()?);
    }
    if let Some(n) = args.iters {
        cfg.iterations = n;
    }
    if let Some(s) = &args.seed {
        cfg.seeds = parse_seed_list(s).map_err(|e| Error::Config(format!("--seed: {e}")))?;
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn default_factory(cfg: &ExperimentConfig) -> Result<Box<dyn seqopt_core::environments::RewardOracle>> {
    cfg.environment.build(cfg.model.vocab_size, cfg.agent.prompt_length)
}

fn report_runs(records: &[RunRecord]) -> Result<()> {
    for r in records {
        println!(
            "{} seed {}: iterations {} final_greedy {} best_so_far {} wall {:.2}s",
            r.label,
            r.seed,
            r.curve.len(),
            r.final_greedy,
            r.best_so_far,
            r.wall_clock_seconds
        );
    }
    match records.iter().find_map(|r| r.error.as_ref().map(|e| (r, e))) {
        Some((r, e)) => Err(Error::Environment(format!(
            "seed {} stopped after {} iterations: [{}] {}",
            r.seed, e.after_iteration, e.tag, e.message
        ))),
        None => Ok(()),
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = resolve_config(&args)?;
            report_runs(&run_experiment(&cfg)?)
        }
        Command::Compare { common, variants, metric } => {
            let metric: Metric = metric.parse()?;
            let base = resolve_config(&common)?;
            let configs = variants
                .iter()
                .map(|name| {
                    let mut c = base.clone();
                    c.variant = Some(name.parse()?);
                    Ok(c)
                })
                .collect::<Result<Vec<_>>>()?;
            let report = compare_variants(&configs, metric, &default_factory)?;
            print!("{}", report.text());
            Ok(())
        }
        Command::Sweep { common, param, values, metric } => {
            let metric: Metric = metric.parse()?;
            let parameter: SweepParameter = param.parse()?;
            let base = resolve_config(&common)?;
            let report = sweep(&base, parameter, &values, metric, &default_factory)?;
            print!("{}", report.csv());
            Ok(())
        }
        Command::Verify => {
            let checks = run_self_checks();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Error::Numeric(format!("self-checks failed: {}", failed.join(", "))))
            }
        }
    }
}

/// One line, `error[<tag>]: <message>`, suitable for scripts.
pub fn error_line(e: &Error) -> String {
    format!("error[{}]: {}", e.tag(), e.to_string().replace('\n', " "))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}
