//! Parallel replication driver. Each worker runs whole replications and
//! results come back in replication order whatever the thread count.

use std::time::Instant;

use mgc_cftp::cftp::{algorithm1_run, algorithm2_with};
use mgc_cftp::dominate::DominatingPath;
use mgc_cftp::rng::replication_seed;
use mgc_cftp::{Algorithm, EquilibriumSample};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::{CliError, Failure, Result};

#[derive(Debug, Clone)]
pub struct Replication {
    pub index: u64,
    /// Root seed of this replication's dominating process.
    pub seed: u64,
    pub outcome: std::result::Result<EquilibriumSample, mgc_cftp::Error>,
    pub wall_us: Option<u64>,
    /// JSON-lines event log, kept only with `--dump-events`.
    pub events: Option<Vec<u8>>,
}

impl Replication {
    pub fn failure(&self) -> Option<Failure> {
        self.outcome.as_ref().err().map(|e| Failure::new(self.index, self.seed, e))
    }
}

/// Runs replication `index` of `cfg` on the current thread.
pub fn run_one(cfg: &RunConfig, index: u64) -> Replication {
    let seed = replication_seed(cfg.seed, index);
    let start = Instant::now();
    let outcome = match cfg.algorithm {
        Algorithm::Regenerative => algorithm1_run(&cfg.params, seed, &cfg.sampler, false).map(|r| (r.sample, r.path)),
        Algorithm::Sandwich => algorithm2_with(&cfg.params, seed, &cfg.sampler, false, |_| {}),
    };
    let wall_us = cfg.timing.then(|| start.elapsed().as_micros() as u64);
    let (outcome, events) = match outcome {
        Ok((sample, path)) => (Ok(sample), cfg.dump_events.as_ref().map(|_| event_log(&path))),
        Err(e) => (Err(e), None),
    };
    Replication { index, seed, outcome, wall_us, events }
}

fn event_log(path: &DominatingPath) -> Vec<u8> {
    let mut buf = Vec::new();
    path.write_event_log(&mut buf).expect("writing to memory");
    buf
}

/// Runs all `cfg.n` replications on a pool of `cfg.threads` workers.
pub fn replicate(cfg: &RunConfig) -> Result<Vec<Replication>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..cfg.n).into_par_iter().map(|i| run_one(cfg, i)).collect()))
}

/// Failures in replication order.
pub fn failures(reps: &[Replication]) -> Vec<Failure> {
    reps.iter().filter_map(Replication::failure).collect()
}
