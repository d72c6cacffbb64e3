//! The two perfect samplers.
//!
//! Both read the dominating process forward in time: each server's reversed
//! departures become forward arrivals carrying their full durations, replayed
//! as an M/G/1 FCFS queue started empty at `-τ̂_j`. Durations are then handed
//! to the FCFS target in the order in which the dominating process initiates
//! service.
//!
//! Algorithm 1 waits for every server to be empty at once and replays the
//! target from empty. Algorithm 2 starts upper and lower envelopes at
//! `T = -T̂` from the lists built at `T` and backs off until their workload
//! vectors coincide at time zero.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::QueueParams;
use crate::dominate::{DominatingPath, StoppingRule, DEFAULT_EVENT_BUDGET};
use crate::error::{Error, Result};
use crate::forward::{
    initiation_order, replay_mg1_fcfs, run_mgc_fcfs_with, FcfsTrace, FeedItem, ServiceEntry,
};
use crate::kw::WorkloadVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "1")]
    Regenerative,
    #[serde(rename = "2")]
    Sandwich,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Regenerative => "1",
            Algorithm::Sandwich => "2",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(Algorithm::Regenerative),
            "2" => Ok(Algorithm::Sandwich),
            other => Err(Error::InvalidParameter(format!("algorithm must be 1 or 2, got `{other}`"))),
        }
    }
}

/// How Algorithm 2 grows its look-back horizon between coalescence checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backoff {
    /// `T̂ = 1, 2, 4, …`
    #[default]
    Binary,
    /// `T̂ = min_j τ̂_j`; after a failed check the server attaining the
    /// minimum is extended to its next emptying.
    StoppingTime,
}

impl fmt::Display for Backoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backoff::Binary => "binary",
            Backoff::StoppingTime => "stopping-time",
        })
    }
}

impl FromStr for Backoff {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(Backoff::Binary),
            "stopping-time" => Ok(Backoff::StoppingTime),
            other => Err(Error::InvalidParameter(format!("unknown back-off `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub event_budget: u64,
    pub backoff: Backoff,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { event_budget: DEFAULT_EVENT_BUDGET, backoff: Backoff::Binary }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub algorithm: Algorithm,
    /// `τ̂` for Algorithm 1, the final `T̂` for Algorithm 2.
    pub horizon: f64,
    /// Coalescence checks made (zero for Algorithm 1).
    pub rounds: u32,
    /// Reversed-time events simulated.
    pub events: u64,
}

/// A draw from the stationary law at time zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSample {
    pub workload: WorkloadVector,
    pub count: usize,
    pub diagnostics: Diagnostics,
}

/// The dominating process read forward in time, every server replayed
/// from its own emptying time up to `t_plus`.
#[derive(Debug, Clone, PartialEq)]
pub struct DominatingRun {
    /// All customers with known initiation, sorted by initiation order.
    pub entries: Vec<ServiceEntry>,
    /// Latest initiation among customers arriving by time zero, or zero.
    pub t_plus: f64,
}

impl DominatingRun {
    /// Customers of the dominating process present at `t ≤ 0`.
    pub fn count_at(&self, t: f64) -> usize {
        self.entries.iter().filter(|e| e.arrival <= t && e.departure() > t).count()
    }
}

/// Forward replay of every server with `τ̂_j` already set. Arrivals after
/// zero come from the cached forward extension, up to `t⁺`.
pub fn dominating_run(path: &mut DominatingPath) -> DominatingRun {
    let c = path.params().servers;
    let mut entries = Vec::new();
    let mut free = vec![f64::NEG_INFINITY; c];
    let mut t_plus: f64 = 0.0;
    for (j, slot) in free.iter_mut().enumerate() {
        let arrivals = path.reverse_to_forward(j);
        let replay = replay_mg1_fcfs(&arrivals);
        for (a, &initiation) in arrivals.iter().zip(&replay.initiations) {
            entries.push(ServiceEntry { arrival: a.time, initiation, duration: a.duration, server: j });
            t_plus = t_plus.max(initiation);
        }
        if let Some(&d) = replay.departures.last() {
            *slot = d;
        }
    }
    if t_plus > 0.0 {
        for (j, slot) in free.iter_mut().enumerate() {
            for a in path.extend_forward(j, t_plus) {
                let initiation = a.time.max(*slot);
                *slot = initiation + a.duration;
                entries.push(ServiceEntry { arrival: a.time, initiation, duration: a.duration, server: j });
            }
        }
    }
    entries.sort_by(initiation_order);
    DominatingRun { entries, t_plus }
}

/// Lists handed to the envelopes started at `horizon = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichLists {
    pub horizon: f64,
    /// Customers arriving by `T`, as `(T, J∨T, R)` with
    /// `R = (J+S)∨T − J∨T`, in initiation order.
    pub star: Vec<ServiceEntry>,
    /// Customers arriving after `T`, untransformed, in initiation order.
    pub post: Vec<ServiceEntry>,
    /// For each starred customer in service at `T`, its completion `J + S`.
    pub star_completion: Vec<Option<f64>>,
}

impl SandwichLists {
    /// Durations in the order the dominating process initiates them, with
    /// the completion time of customers already in service at `T`.
    fn durations_by_initiation(&self) -> Vec<(f64, Option<f64>)> {
        let mut out = Vec::with_capacity(self.star.len() + self.post.len());
        let (mut i, mut k) = (0, 0);
        while i < self.star.len() || k < self.post.len() {
            let take_star = match (self.star.get(i), self.post.get(k)) {
                (Some(s), Some(p)) => s.initiation <= p.initiation,
                (Some(_), None) => true,
                _ => false,
            };
            if take_star {
                out.push((self.star[i].duration, self.star_completion[i]));
                i += 1;
            } else {
                out.push((self.post[k].duration, None));
                k += 1;
            }
        }
        out
    }

    /// Arrival times fed to the envelopes on `[T, 0]`.
    fn arrival_times(&self) -> Vec<f64> {
        let mut post: Vec<(f64, usize)> =
            self.post.iter().filter(|e| e.arrival <= 0.0).map(|e| (e.arrival, e.server)).collect();
        post.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut times = vec![self.horizon; self.star.len()];
        times.extend(post.into_iter().map(|(t, _)| t));
        times
    }
}

/// Splits the dominating customers at `T` and transforms those arriving by
/// `T`. Every server must have `τ̂_j ≥ -T`.
pub fn build_lists(run: &DominatingRun, horizon: f64) -> SandwichLists {
    let t = horizon;
    let mut star = Vec::new();
    let mut star_completion = Vec::new();
    let mut post = Vec::new();
    for e in &run.entries {
        if e.arrival <= t {
            let start = e.initiation.max(t);
            // Case split keeps R = S bit-exact for customers still waiting at T.
            let residual = if e.initiation >= t {
                e.duration
            } else if e.departure() <= t {
                0.0
            } else {
                e.departure() - t
            };
            star.push(ServiceEntry { arrival: t, initiation: start, duration: residual, server: e.server });
            star_completion.push((e.initiation < t && e.departure() > t).then(|| e.departure()));
        } else {
            post.push(*e);
        }
    }
    SandwichLists { horizon, star, post, star_completion }
}

/// Upper and lower envelopes read at time zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelopes {
    pub upper: WorkloadVector,
    pub lower: WorkloadVector,
    pub upper_trace: FcfsTrace,
    pub lower_trace: FcfsTrace,
}

/// Runs both envelopes from empty at `T`. The `m`-th arrival of either
/// receives the `m`-th duration in initiation order of the dominating
/// process; the lower envelope replaces the first `|L*|` of them by zero.
pub fn run_envelopes(lists: &SandwichLists, c: usize, record: bool) -> Envelopes {
    let times = lists.arrival_times();
    let durations = lists.durations_by_initiation();
    debug_assert!(durations.len() >= times.len());
    let k = lists.star.len();
    let upper_feed: Vec<FeedItem> = times
        .iter()
        .zip(&durations)
        .map(|(&arrival, &(duration, completion))| FeedItem { arrival, duration, completion })
        .collect();
    let lower_feed: Vec<FeedItem> = upper_feed
        .iter()
        .enumerate()
        .map(|(m, f)| if m < k { FeedItem::new(f.arrival, 0.0) } else { *f })
        .collect();
    let zero = WorkloadVector::zeros(c);
    let t0 = lists.horizon.min(0.0);
    let (upper_trace, upper) = run_mgc_fcfs_with(c, &upper_feed, &zero, t0, 0.0, record);
    let (lower_trace, lower) = run_mgc_fcfs_with(c, &lower_feed, &zero, t0, 0.0, record);
    Envelopes { upper, lower, upper_trace, lower_trace }
}

/// Exact coordinate-wise equality.
pub fn coalesced(u: &WorkloadVector, l: &WorkloadVector) -> bool {
    u.as_slice() == l.as_slice()
}

/// Algorithm 1: back to the first simultaneous emptying, then forward.
pub fn algorithm1(params: &QueueParams, seed: u64, config: &SamplerConfig) -> Result<EquilibriumSample> {
    algorithm1_run(params, seed, config, false).map(|r| r.sample)
}

/// Everything Algorithm 1 computed, for inspection.
#[derive(Debug, Clone)]
pub struct Algorithm1Run {
    pub sample: EquilibriumSample,
    pub tau: f64,
    pub dominating: DominatingRun,
    pub target: FcfsTrace,
    pub path: DominatingPath,
}

pub fn algorithm1_run(params: &QueueParams, seed: u64, config: &SamplerConfig, record: bool) -> Result<Algorithm1Run> {
    let mut path = DominatingPath::new(*params, seed, config.event_budget);
    let tau = path.extend_until_all_empty()?;
    let dominating = dominating_run(&mut path);
    let lists = build_lists(&dominating, -tau);
    let env = run_envelopes(&lists, params.servers, record);
    let count = env.upper_trace.count_at(0.0);
    let sample = EquilibriumSample {
        workload: env.upper,
        count,
        diagnostics: Diagnostics {
            algorithm: Algorithm::Regenerative,
            horizon: tau,
            rounds: 0,
            events: path.events_simulated(),
        },
    };
    Ok(Algorithm1Run { sample, tau, dominating, target: env.upper_trace, path })
}

/// One coalescence check of Algorithm 2.
#[derive(Debug, Clone)]
pub struct Round {
    pub t_hat: f64,
    pub taus: Vec<f64>,
    pub dominating: DominatingRun,
    pub lists: SandwichLists,
    pub envelopes: Envelopes,
}

impl Round {
    pub fn coalesced(&self) -> bool {
        coalesced(&self.envelopes.upper, &self.envelopes.lower)
    }
}

/// Builds the lists at `-t_hat` from a path whose servers have all been
/// extended to `τ̂_j ≥ t_hat`, and runs the envelopes.
pub fn check_round(path: &mut DominatingPath, t_hat: f64, record: bool) -> Round {
    let c = path.params().servers;
    let taus = (0..c).map(|j| path.tau(j).expect("server extended")).collect();
    let dominating = dominating_run(path);
    let lists = build_lists(&dominating, -t_hat);
    let envelopes = run_envelopes(&lists, c, record);
    Round { t_hat, taus, dominating, lists, envelopes }
}

/// Extends every server to its first emptying at or after `t_hat` and checks.
pub fn round_at(path: &mut DominatingPath, t_hat: f64, record: bool) -> Result<Round> {
    for j in 0..path.params().servers {
        path.extend_until(j, StoppingRule::EmptyAtOrAfter(t_hat))?;
    }
    Ok(check_round(path, t_hat, record))
}

/// Drives Algorithm 2 and hands every round to `visit`.
pub fn algorithm2_with<F: FnMut(&Round)>(
    params: &QueueParams,
    seed: u64,
    config: &SamplerConfig,
    record: bool,
    mut visit: F,
) -> Result<(EquilibriumSample, DominatingPath)> {
    let mut path = DominatingPath::new(*params, seed, config.event_budget);
    let c = params.servers;
    let mut rounds = 0u32;
    let mut t_hat = 1.0;
    if config.backoff == Backoff::StoppingTime {
        for j in 0..c {
            path.extend_until(j, StoppingRule::EmptyAtOrAfter(0.0))?;
        }
    }
    loop {
        let round = match config.backoff {
            Backoff::Binary => round_at(&mut path, t_hat, record)?,
            Backoff::StoppingTime => {
                t_hat = min_tau(&path).1;
                check_round(&mut path, t_hat, record)
            }
        };
        rounds += 1;
        visit(&round);
        if round.coalesced() {
            let count = round.envelopes.upper_trace.count_at(0.0);
            let sample = EquilibriumSample {
                workload: round.envelopes.upper,
                count,
                diagnostics: Diagnostics {
                    algorithm: Algorithm::Sandwich,
                    horizon: t_hat,
                    rounds,
                    events: path.events_simulated(),
                },
            };
            return Ok((sample, path));
        }
        match config.backoff {
            Backoff::Binary => t_hat *= 2.0,
            Backoff::StoppingTime => {
                let (j, _) = min_tau(&path);
                path.extend_until(j, StoppingRule::NextEmptying)?;
            }
        }
    }
}

fn min_tau(path: &DominatingPath) -> (usize, f64) {
    (0..path.params().servers)
        .map(|j| (j, path.tau(j).expect("server extended")))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one server")
}

/// Algorithm 2: sandwiching with the configured back-off.
pub fn algorithm2(params: &QueueParams, seed: u64, config: &SamplerConfig) -> Result<EquilibriumSample> {
    algorithm2_with(params, seed, config, false, |_| {}).map(|(s, _)| s)
}

/// Dispatches on `algorithm`.
pub fn sample(params: &QueueParams, seed: u64, algorithm: Algorithm, config: &SamplerConfig) -> Result<EquilibriumSample> {
    match algorithm {
        Algorithm::Regenerative => algorithm1(params, seed, config),
        Algorithm::Sandwich => algorithm2(params, seed, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ServiceDistribution;
    use crate::dominate::PsServerState;

    fn mm(lambda: f64, c: usize) -> QueueParams {
        QueueParams::new(lambda, c, ServiceDistribution::exponential(2.0).unwrap()).unwrap()
    }

    fn entry(t: f64, j: f64, s: f64) -> ServiceEntry {
        ServiceEntry { arrival: t, initiation: j, duration: s, server: 0 }
    }

    fn one(e: ServiceEntry, t: f64) -> ServiceEntry {
        build_lists(&DominatingRun { entries: vec![e], t_plus: 0.0 }, t).star[0]
    }

    #[test]
    fn list_transform_examples() {
        assert_eq!(one(entry(-5.0, -1.0, 4.0), -2.0), entry(-2.0, -1.0, 4.0));
        assert_eq!(one(entry(-5.0, -3.0, 2.0), -2.0), entry(-2.0, -2.0, 1.0));
        assert_eq!(one(entry(-5.0, -4.0, 1.0), -2.0), entry(-2.0, -2.0, 0.0));
    }

    #[test]
    fn lists_split_at_horizon() {
        let run = DominatingRun {
            entries: vec![entry(-5.0, -4.0, 1.0), entry(-1.0, -1.0, 2.0), entry(0.5, 0.5, 1.0)],
            t_plus: 0.5,
        };
        let lists = build_lists(&run, -2.0);
        assert_eq!(lists.star.len(), 1);
        assert_eq!(lists.post.len(), 2);
        assert!(lists.star.iter().all(|e| e.arrival == -2.0 && e.duration >= 0.0));
    }

    #[test]
    fn empty_star_list_coalesces_immediately() {
        let run = DominatingRun { entries: vec![entry(-1.0, -1.0, 2.0), entry(-0.5, -0.5, 0.2)], t_plus: 0.0 };
        let env = run_envelopes(&build_lists(&run, -2.0), 2, false);
        assert!(coalesced(&env.upper, &env.lower));
        assert_eq!(env.upper.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn zero_durations_give_zero_vectors() {
        let run = DominatingRun {
            entries: vec![entry(-3.0, -3.0, 0.0), entry(-1.0, -1.0, 0.0), entry(-0.5, -0.5, 0.0)],
            t_plus: 0.0,
        };
        let env = run_envelopes(&build_lists(&run, -2.0), 2, false);
        assert_eq!(env.upper, WorkloadVector::zeros(2));
        assert_eq!(env.lower, WorkloadVector::zeros(2));
    }

    #[test]
    fn coalescence_is_exact_equality() {
        let a = WorkloadVector::new(vec![0.0, 1.0]).unwrap();
        let b = WorkloadVector::new(vec![0.0, 0.0]).unwrap();
        assert!(coalesced(&a, &a.clone()));
        assert!(!coalesced(&a, &b));
    }

    #[test]
    fn empty_dominating_state_gives_empty_sample() {
        let p = mm(10.0, 10);
        let mut path = DominatingPath::from_states(p, 4, vec![PsServerState::empty(); 10], 1_000_000);
        assert_eq!(path.extend_until_all_empty().unwrap(), 0.0);
        let run = dominating_run(&mut path);
        assert!(run.entries.is_empty());
        let env = run_envelopes(&build_lists(&run, 0.0), 10, false);
        assert_eq!(env.upper, WorkloadVector::zeros(10));

        let mut path = DominatingPath::from_states(p, 4, vec![PsServerState::empty(); 10], 1_000_000);
        let round = round_at(&mut path, 1.0, false).unwrap();
        assert!(round.coalesced());
        assert_eq!(round.envelopes.upper, WorkloadVector::zeros(10));
    }

    #[test]
    fn samplers_are_deterministic() {
        let p = mm(10.0, 10);
        let cfg = SamplerConfig::default();
        for seed in 0..20 {
            assert_eq!(algorithm1(&p, seed, &cfg).unwrap(), algorithm1(&p, seed, &cfg).unwrap());
            assert_eq!(algorithm2(&p, seed, &cfg).unwrap(), algorithm2(&p, seed, &cfg).unwrap());
        }
    }

    #[test]
    fn sample_count_matches_zero_coordinates() {
        let p = mm(10.0, 10);
        let cfg = SamplerConfig::default();
        for seed in 0..200 {
            for s in [algorithm1(&p, seed, &cfg).unwrap(), algorithm2(&p, seed, &cfg).unwrap()] {
                if s.count < 10 {
                    assert_eq!(s.workload.zero_count(), 10 - s.count, "seed {seed}: {s:?}");
                } else {
                    assert_eq!(s.workload.zero_count(), 0);
                }
            }
        }
    }

    #[test]
    fn stopping_time_backoff_terminates() {
        let p = mm(10.0, 10);
        let cfg = SamplerConfig { backoff: Backoff::StoppingTime, ..Default::default() };
        for seed in 0..20 {
            let s = algorithm2(&p, seed, &cfg).unwrap();
            assert!(s.diagnostics.rounds >= 1);
        }
    }

    #[test]
    fn names_round_trip() {
        for a in [Algorithm::Regenerative, Algorithm::Sandwich] {
            assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
        }
        for b in [Backoff::Binary, Backoff::StoppingTime] {
            assert_eq!(b.to_string().parse::<Backoff>().unwrap(), b);
        }
        assert!("3".parse::<Algorithm>().is_err());
    }
}
