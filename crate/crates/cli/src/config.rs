//! Command-line flags and the validated run configuration built from them.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mgc_cftp::dominate::DEFAULT_EVENT_BUDGET;
use mgc_cftp::{Algorithm, Backoff, QueueParams, SamplerConfig, ServiceDistribution};
use serde::Serialize;

use crate::error::{CliError, Result};

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "MGC_CFTP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mgc-cftp", version, about = "Perfect sampling of the M/G/c FCFS workload vector")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Draw equilibrium samples, one row per replication.
    Sample(RunArgs),
    /// Chi-squared test of sampled customer counts against the M/M/c law.
    Validate(RunArgs),
    /// Run-time summary next to the analytic bound.
    Bench(RunArgs),
}

impl Command {
    pub fn into_config(self) -> Result<RunConfig> {
        match self {
            Self::Sample(a) => RunConfig::from_args(CommandKind::Sample, &a),
            Self::Validate(a) => RunConfig::from_args(CommandKind::Validate, &a),
            Self::Bench(a) => RunConfig::from_args(CommandKind::Bench, &a),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Arrival rate.
    #[arg(long)]
    pub lambda: f64,
    /// Number of servers.
    #[arg(long)]
    pub c: usize,
    /// Service law: exp:RATE, unif:LOW:HIGH, det:VALUE or erlang:SHAPE:RATE.
    #[arg(long)]
    pub service: String,
    /// Number of replications.
    #[arg(long, default_value_t = 1)]
    pub n: u64,
    /// Sampler: 1 (regenerative) or 2 (sandwich).
    #[arg(long = "alg", default_value = "2")]
    pub algorithm: Algorithm,
    /// Base seed; replication i uses a root seed derived from (seed, i).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Back-off schedule for algorithm 2.
    #[arg(long, default_value = "binary")]
    pub backoff: Backoff,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Output format; csv for sample and bench, json for validate by default.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; all cores when absent.
    #[arg(long, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// Maximum reversed-time events per replication.
    #[arg(long, default_value_t = DEFAULT_EVENT_BUDGET)]
    pub event_budget: u64,
    /// Write every replication's dominating-process event log to this file.
    #[arg(long)]
    pub dump_events: Option<PathBuf>,
    /// Fill the wall_us column. Timings differ between runs.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Sample,
    Validate,
    Bench,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: CommandKind,
    pub params: QueueParams,
    pub n: u64,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub sampler: SamplerConfig,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub threads: Option<usize>,
    pub dump_events: Option<PathBuf>,
    pub timing: bool,
}

impl RunConfig {
    pub fn from_args(command: CommandKind, a: &RunArgs) -> Result<Self> {
        let service: ServiceDistribution = a.service.parse()?;
        let params = QueueParams::new(a.lambda, a.c, service)?;
        if command == CommandKind::Validate && !service.is_exponential() {
            return Err(CliError::UnsupportedValidation(format!(
                "validation requires exponential service, got {service}"
            )));
        }
        if a.threads == Some(0) {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        if a.event_budget == 0 {
            return Err(CliError::Config("--event-budget must be positive".into()));
        }
        let format = a.format.unwrap_or(match command {
            CommandKind::Validate => Format::Json,
            _ => Format::Csv,
        });
        Ok(Self {
            command,
            params,
            n: a.n,
            seed: a.seed,
            algorithm: a.algorithm,
            sampler: SamplerConfig { event_budget: a.event_budget, backoff: a.backoff },
            output: a.output.clone(),
            format,
            threads: a.threads,
            dump_events: a.dump_events.clone(),
            timing: a.timing,
        })
    }

    /// Configuration with defaults for everything but the queue and sampler.
    pub fn new(command: CommandKind, params: QueueParams, n: u64, seed: u64, algorithm: Algorithm) -> Self {
        Self {
            command,
            params,
            n,
            seed,
            algorithm,
            sampler: SamplerConfig::default(),
            output: None,
            format: if command == CommandKind::Validate { Format::Json } else { Format::Csv },
            threads: None,
            dump_events: None,
            timing: false,
        }
    }
}
