//! The `sample`, `validate` and `bench` commands.

use std::collections::BTreeMap;
use std::io::Write;

use mgc_cftp::analysis::{
    alg1_runtime_lower_bound, alg2_runtime_heuristic_mmc, chi_squared_gof, histogram, mmc_stationary,
    ChiBin, ChiSquaredReport,
};
use mgc_cftp::{Algorithm, Backoff, ServiceDistribution};
use serde::Serialize;

use crate::config::{CommandKind, Format, RunConfig};
use crate::error::{CliError, Failure, Result};
use crate::replicate::{failures, replicate, Replication};

/// Column order of `sample` CSV output.
pub const SAMPLE_COLUMNS: [&str; 11] =
    ["seed", "algorithm", "c", "lambda", "dist", "workload", "count", "horizon", "rounds", "events", "wall_us"];

/// Column order of `bench` CSV output.
pub const BENCH_COLUMNS: [&str; 14] = [
    "lambda",
    "c",
    "rho",
    "dist",
    "alg",
    "backoff",
    "n",
    "failures",
    "mean_runtime",
    "mean_log2_runtime",
    "mean_rounds",
    "bound",
    "runtime_histogram",
    "count_histogram",
];

/// One `sample` output row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRecord {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub c: usize,
    pub lambda: f64,
    pub dist: String,
    pub workload: Vec<f64>,
    pub count: usize,
    pub horizon: f64,
    pub rounds: u32,
    pub events: u64,
    pub wall_us: Option<u64>,
}

impl SampleRecord {
    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.algorithm.to_string(),
            self.c.to_string(),
            self.lambda.to_string(),
            self.dist.clone(),
            join(&self.workload),
            self.count.to_string(),
            self.horizon.to_string(),
            self.rounds.to_string(),
            self.events.to_string(),
            self.wall_us.map(|w| w.to_string()).unwrap_or_default(),
        ]
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

/// Sample records for the successful replications, in replication order.
pub fn sample_records(cfg: &RunConfig, reps: &[Replication]) -> Vec<SampleRecord> {
    let dist = cfg.params.service.to_string();
    reps.iter()
        .filter_map(|r| {
            let s = r.outcome.as_ref().ok()?;
            Some(SampleRecord {
                seed: r.seed,
                algorithm: s.diagnostics.algorithm,
                c: cfg.params.servers,
                lambda: cfg.params.lambda,
                dist: dist.clone(),
                workload: s.workload.as_slice().to_vec(),
                count: s.count,
                horizon: s.diagnostics.horizon,
                rounds: s.diagnostics.rounds,
                events: s.diagnostics.events,
                wall_us: r.wall_us,
            })
        })
        .collect()
}

/// The `validate` report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateReport {
    pub lambda: f64,
    pub mu: f64,
    pub c: usize,
    pub rho: f64,
    pub dist: String,
    pub algorithm: Algorithm,
    pub backoff: Backoff,
    pub seed: u64,
    pub failures: usize,
    #[serde(flatten)]
    pub chi_squared: ChiSquaredReport,
}

pub fn validate_report(cfg: &RunConfig, reps: &[Replication]) -> Result<ValidateReport> {
    let ServiceDistribution::Exponential { rate: mu } = cfg.params.service else {
        return Err(CliError::UnsupportedValidation(format!(
            "validation requires exponential service, got {}",
            cfg.params.service
        )));
    };
    let p = &cfg.params;
    let pmf = mmc_stationary(p.lambda, mu, p.servers)?;
    let counts = histogram(reps.iter().filter_map(|r| r.outcome.as_ref().ok().map(|s| s.count)));
    let chi_squared = chi_squared_gof(&counts, &pmf)?;
    Ok(ValidateReport {
        lambda: p.lambda,
        mu,
        c: p.servers,
        rho: p.rho(),
        dist: p.service.to_string(),
        algorithm: cfg.algorithm,
        backoff: cfg.sampler.backoff,
        seed: cfg.seed,
        failures: reps.iter().filter(|r| r.outcome.is_err()).count(),
        chi_squared,
    })
}

/// The `bench` summary row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub lambda: f64,
    pub c: usize,
    pub rho: f64,
    pub dist: String,
    pub alg: Algorithm,
    pub backoff: Backoff,
    pub n: u64,
    pub failures: usize,
    /// Mean `τ̂` for algorithm 1, mean final `T̂` for algorithm 2.
    pub mean_runtime: Option<f64>,
    pub mean_log2_runtime: Option<f64>,
    pub mean_rounds: Option<f64>,
    /// Lower bound for algorithm 1; heuristic for algorithm 2, exponential service only.
    pub bound: Option<f64>,
    /// Replications per integer bin `⌊log₂(runtime + 1)⌋`.
    pub runtime_histogram: BTreeMap<u32, u64>,
    /// Replications per customer count at time zero.
    pub count_histogram: Vec<u64>,
}

pub fn bench_summary(cfg: &RunConfig, reps: &[Replication]) -> Result<BenchSummary> {
    let p = &cfg.params;
    let ok: Vec<_> = reps.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let mean = |f: &dyn Fn(&mgc_cftp::EquilibriumSample) -> f64| {
        (!ok.is_empty()).then(|| ok.iter().map(|s| f(s)).sum::<f64>() / ok.len() as f64)
    };
    let mut runtime_histogram = BTreeMap::new();
    for s in &ok {
        *runtime_histogram.entry(log2_bin(s.diagnostics.horizon)).or_insert(0) += 1;
    }
    let bound = match cfg.algorithm {
        Algorithm::Regenerative => Some(alg1_runtime_lower_bound(p.lambda, p.servers, p.rho())),
        Algorithm::Sandwich if p.service.is_exponential() => Some(alg2_runtime_heuristic_mmc(p.lambda, p.servers, p.rho())?),
        Algorithm::Sandwich => None,
    };
    Ok(BenchSummary {
        lambda: p.lambda,
        c: p.servers,
        rho: p.rho(),
        dist: p.service.to_string(),
        alg: cfg.algorithm,
        backoff: cfg.sampler.backoff,
        n: cfg.n,
        failures: reps.len() - ok.len(),
        mean_runtime: mean(&|s| s.diagnostics.horizon),
        mean_log2_runtime: mean(&|s| (s.diagnostics.horizon + 1.0).log2()),
        mean_rounds: mean(&|s| s.diagnostics.rounds as f64),
        bound,
        runtime_histogram,
        count_histogram: histogram(ok.iter().map(|s| s.count)),
    })
}

/// `⌊log₂(t + 1)⌋`.
pub fn log2_bin(t: f64) -> u32 {
    (t + 1.0).log2().floor().max(0.0) as u32
}

impl BenchSummary {
    fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let runtime =
            self.runtime_histogram.iter().map(|(b, n)| format!("{b}:{n}")).collect::<Vec<_>>().join(" ");
        let counts = self
            .count_histogram
            .iter()
            .enumerate()
            .filter(|(_, n)| **n > 0)
            .map(|(k, n)| format!("{k}:{n}"))
            .collect::<Vec<_>>()
            .join(" ");
        vec![
            self.lambda.to_string(),
            self.c.to_string(),
            self.rho.to_string(),
            self.dist.clone(),
            self.alg.to_string(),
            self.backoff.to_string(),
            self.n.to_string(),
            self.failures.to_string(),
            opt(self.mean_runtime),
            opt(self.mean_log2_runtime),
            opt(self.mean_rounds),
            opt(self.bound),
            runtime,
            counts,
        ]
    }
}

fn write_csv<W: Write>(out: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json_lines<W: Write, T: Serialize>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn write_chi_bins<W: Write>(out: W, bins: &[ChiBin]) -> Result<()> {
    let rows = bins.iter().map(|b| {
        vec![
            b.low.to_string(),
            b.high.map(|h| h.to_string()).unwrap_or_default(),
            b.observed.to_string(),
            b.expected.to_string(),
        ]
    });
    write_csv(out, &["low", "high", "observed", "expected"], rows)
}

/// Writes every replication's event log, each preceded by a header line.
pub fn write_event_logs<W: Write>(mut out: W, reps: &[Replication]) -> Result<()> {
    for r in reps {
        if let Some(events) = &r.events {
            serde_json::to_writer(&mut out, &serde_json::json!({ "replication": r.index, "seed": r.seed }))?;
            out.write_all(b"\n")?;
            out.write_all(events)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Runs the configured command, writing its output to `out`. Replication
/// failures do not stop the run; they are returned after all output is
/// written.
pub fn execute<W: Write>(cfg: &RunConfig, out: W) -> Result<()> {
    let reps = replicate(cfg)?;
    if let Some(path) = &cfg.dump_events {
        write_event_logs(std::io::BufWriter::new(std::fs::File::create(path)?), &reps)?;
    }
    let failed = failures(&reps);
    let written = write_output(cfg, &reps, out);
    finish(cfg, failed, written)
}

fn write_output<W: Write>(cfg: &RunConfig, reps: &[Replication], out: W) -> Result<()> {
    match cfg.command {
        CommandKind::Sample => {
            let records = sample_records(cfg, reps);
            match cfg.format {
                Format::Csv => write_csv(out, &SAMPLE_COLUMNS, records.iter().map(SampleRecord::csv_fields)),
                Format::Json => write_json_lines(out, &records),
            }
        }
        CommandKind::Validate => {
            let report = validate_report(cfg, reps)?;
            match cfg.format {
                Format::Csv => write_chi_bins(out, &report.chi_squared.bins),
                Format::Json => write_json_lines(out, &[report]),
            }
        }
        CommandKind::Bench => {
            let summary = bench_summary(cfg, reps)?;
            match cfg.format {
                Format::Csv => write_csv(out, &BENCH_COLUMNS, [summary.csv_fields()]),
                Format::Json => write_json_lines(out, &[summary]),
            }
        }
    }
}

fn finish(cfg: &RunConfig, failed: Vec<Failure>, written: Result<()>) -> Result<()> {
    if !failed.is_empty() {
        return Err(CliError::Replications { failed: failed.len(), total: cfg.n, failures: failed });
    }
    written
}
