//! Forward-time replay of FCFS queues.
//!
//! The multi-server replay keeps the absolute times at which each server
//! frees up, sorted ascending; the Kiefer-Wolfowitz vector at time `t` is
//! `(F − t)⁺`. This is the recursion of [`crate::kw`] written in absolute
//! time, and it makes customer counts agree exactly with the vector's zero
//! coordinates since both are read off the same floating-point numbers.

use serde::{Deserialize, Serialize};

use crate::dominate::ForwardArrival;
use crate::kw::WorkloadVector;

/// One customer as seen by a dominating or target process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceEntry {
    pub arrival: f64,
    pub initiation: f64,
    pub duration: f64,
    pub server: usize,
}

impl ServiceEntry {
    pub fn departure(&self) -> f64 {
        self.initiation + self.duration
    }
}

/// Single-server FCFS replay of one server of the dominating process.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Mg1Replay {
    pub initiations: Vec<f64>,
    pub departures: Vec<f64>,
    /// Departure instants after which the server is empty until the next
    /// arrival in the list (the last departure is always one).
    pub emptyings: Vec<f64>,
}

/// `J_i = max(t_i, D_{i−1})`, `D_i = J_i + S_i`.
pub fn replay_mg1_fcfs(arrivals: &[ForwardArrival]) -> Mg1Replay {
    let mut out = Mg1Replay::default();
    let mut free = f64::NEG_INFINITY;
    for (i, a) in arrivals.iter().enumerate() {
        debug_assert!(i == 0 || arrivals[i - 1].time <= a.time, "arrivals must be sorted");
        let j = a.time.max(free);
        free = j + a.duration;
        out.initiations.push(j);
        out.departures.push(free);
        let next = arrivals.get(i + 1).map_or(f64::INFINITY, |n| n.time);
        if free < next {
            out.emptyings.push(free);
        }
    }
    out
}

/// One fed customer of an M/G/c FCFS replay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedItem {
    pub arrival: f64,
    pub duration: f64,
    /// Absolute completion time of a customer whose service is already under
    /// way on arrival; used instead of `arrival + duration` when it starts
    /// immediately, so the departure is bit-identical to the one it copies.
    pub completion: Option<f64>,
}

impl FeedItem {
    pub fn new(arrival: f64, duration: f64) -> Self {
        Self { arrival, duration, completion: None }
    }
}

/// Record of an M/G/c FCFS replay over `[t0, t1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FcfsTrace {
    pub t0: f64,
    pub t1: f64,
    pub arrivals: Vec<f64>,
    /// Initiation time of each fed customer, in feed order.
    pub initiations: Vec<f64>,
    /// Departure time of each fed customer, in feed order.
    pub departures: Vec<f64>,
    initial: Vec<f64>,
    /// Sorted free times after each fed customer, when recorded.
    states: Option<Vec<Vec<f64>>>,
}

impl FcfsTrace {
    /// Fed customers present at `t`: arrived by `t` and not yet departed.
    /// Work carried in by the starting vector is not counted.
    pub fn count_at(&self, t: f64) -> usize {
        self.arrivals
            .iter()
            .zip(&self.departures)
            .filter(|&(&a, &d)| a <= t && d > t)
            .count()
    }

    /// Departures sorted ascending (the `m`-th departure is entry `m`).
    pub fn sorted_departures(&self) -> Vec<f64> {
        let mut d = self.departures.clone();
        d.sort_by(f64::total_cmp);
        d
    }

    /// Workload vector at any `t ∈ [t0, t1]`; requires recorded states.
    pub fn workload_at(&self, t: f64) -> WorkloadVector {
        let states = self.states.as_ref().expect("replay was run without recording");
        let k = self.arrivals.partition_point(|&a| a <= t);
        let free = if k == 0 { &self.initial } else { &states[k - 1] };
        workload_from_free_times(free, t)
    }

    pub fn is_recorded(&self) -> bool {
        self.states.is_some()
    }
}

/// `(F − t)⁺`, already sorted because `F` is.
pub fn workload_from_free_times(free: &[f64], t: f64) -> WorkloadVector {
    WorkloadVector::new(free.iter().map(|&f| if f > t { f - t } else { 0.0 }).collect())
        .expect("free times are sorted")
}

/// Inserts the updated first entry back into sorted position.
fn resort_first(free: &mut [f64]) {
    let x = free[0];
    let mut i = 0;
    while i + 1 < free.len() && free[i + 1] < x {
        free[i] = free[i + 1];
        i += 1;
    }
    free[i] = x;
}

/// M/G/c FCFS from `start` at `t0`, fed by `feed` (sorted by arrival; ties
/// served in list order), read at `t1`. Customers arriving after `t1` are
/// ignored.
pub fn run_mgc_fcfs(
    c: usize,
    feed: &[FeedItem],
    start: &WorkloadVector,
    t0: f64,
    t1: f64,
) -> (FcfsTrace, WorkloadVector) {
    run_mgc_fcfs_with(c, feed, start, t0, t1, false)
}

/// As [`run_mgc_fcfs`]; with `record` the trace can report the workload
/// vector at any time in `[t0, t1]`.
pub fn run_mgc_fcfs_with(
    c: usize,
    feed: &[FeedItem],
    start: &WorkloadVector,
    t0: f64,
    t1: f64,
    record: bool,
) -> (FcfsTrace, WorkloadVector) {
    assert_eq!(start.servers(), c, "start vector has wrong length");
    assert!(t0 <= t1);
    let mut free: Vec<f64> = start.as_slice().iter().map(|&w| if w > 0.0 { t0 + w } else { t0 }).collect();
    let initial = free.clone();
    let n = feed.partition_point(|f| f.arrival <= t1);
    let mut arrivals = Vec::with_capacity(n);
    let mut initiations = Vec::with_capacity(n);
    let mut departures = Vec::with_capacity(n);
    let mut states = record.then(|| Vec::with_capacity(n));
    let mut last = t0;
    for item in &feed[..n] {
        assert!(item.arrival >= last, "feed must be sorted and start at or after t0");
        debug_assert!(item.duration >= 0.0);
        last = item.arrival;
        let j = item.arrival.max(free[0]);
        let d = match item.completion {
            Some(done) if j == item.arrival => done,
            _ => j + item.duration,
        };
        free[0] = d;
        resort_first(&mut free);
        arrivals.push(item.arrival);
        initiations.push(j);
        departures.push(d);
        if let Some(s) = states.as_mut() {
            s.push(free.clone());
        }
    }
    let end = workload_from_free_times(&free, t1);
    let trace = FcfsTrace { t0, t1, arrivals, initiations, departures, initial, states };
    (trace, end)
}

/// Durations ordered by initiation; ties by arrival time, then server.
pub fn reorder_by_initiation(entries: &[ServiceEntry]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..entries.len()).collect();
    idx.sort_by(|&a, &b| initiation_order(&entries[a], &entries[b]));
    idx.into_iter().map(|i| entries[i].duration).collect()
}

/// The tie-break used wherever customers are ranked by initiation.
pub fn initiation_order(a: &ServiceEntry, b: &ServiceEntry) -> std::cmp::Ordering {
    a.initiation
        .total_cmp(&b.initiation)
        .then(a.arrival.total_cmp(&b.arrival))
        .then(a.server.cmp(&b.server))
}

/// A c-server queue that routes arrivals to fixed servers (random
/// assignment) before `switch_at` and runs one FCFS queue from then on.
/// The `m`-th service initiation receives `durations[m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingTrace {
    /// Per customer, in arrival order.
    pub entries: Vec<ServiceEntry>,
    /// The `m`-th initiation time.
    pub initiations: Vec<f64>,
    /// The `m`-th departure time.
    pub departures: Vec<f64>,
    switch_at: f64,
    /// Server free times at the switch, sorted.
    free_at_switch: Vec<f64>,
    /// Sorted free times after each FCFS-phase customer is placed.
    fcfs_states: Vec<(f64, Vec<f64>)>,
}

impl SwitchingTrace {
    pub fn count_at(&self, t: f64) -> usize {
        self.entries.iter().filter(|e| e.arrival <= t && e.departure() > t).count()
    }

    /// Kiefer-Wolfowitz vector at `t ≥ switch_at` (FCFS phase only).
    pub fn workload_at(&self, t: f64) -> WorkloadVector {
        assert!(t >= self.switch_at, "workload vector is defined after the switch");
        let k = self.fcfs_states.partition_point(|(a, _)| *a <= t);
        let free = if k == 0 { &self.free_at_switch } else { &self.fcfs_states[k - 1].1 };
        workload_from_free_times(free, t)
    }
}

/// Runs the switching system. `switch_at = +∞` is pure random assignment;
/// a switch at or before the first arrival is pure FCFS.
pub fn simulate_switching(
    c: usize,
    arrivals: &[f64],
    assignment: &[usize],
    durations: &[f64],
    switch_at: f64,
) -> SwitchingTrace {
    let n = arrivals.len();
    assert!(assignment.len() == n && durations.len() >= n);
    assert!(arrivals.windows(2).all(|w| w[0] <= w[1]));
    let mut free = vec![f64::NEG_INFINITY; c];
    // Per-server queues in arrival order.
    let mut queues: Vec<std::collections::VecDeque<usize>> = vec![Default::default(); c];
    for (i, &j) in assignment.iter().enumerate() {
        queues[j].push_back(i);
    }
    let mut initiation = vec![f64::NAN; n];
    let mut server = assignment.to_vec();
    let mut started = vec![false; n];
    let mut rank = vec![0usize; n];
    let mut m = 0;
    // Random-assignment phase: repeatedly take the earliest candidate.
    loop {
        let mut best: Option<(f64, f64, usize, usize)> = None;
        for (j, q) in queues.iter().enumerate() {
            if let Some(&i) = q.front() {
                let cand = arrivals[i].max(free[j]);
                let key = (cand, arrivals[i], i, j);
                if best.is_none_or(|b| (key.0, key.1, key.2) < (b.0, b.1, b.2)) {
                    best = Some(key);
                }
            }
        }
        let Some((when, _, i, j)) = best else { break };
        if when >= switch_at {
            break;
        }
        queues[j].pop_front();
        initiation[i] = when;
        free[j] = when + durations[m];
        rank[i] = m;
        started[i] = true;
        m += 1;
    }
    // FCFS phase: waiting customers in arrival order, each to the server
    // that frees first.
    let mut fcfs: Vec<f64> = free.clone();
    fcfs.sort_by(f64::total_cmp);
    let free_at_switch = fcfs.clone();
    let mut fcfs_states = Vec::new();
    for i in 0..n {
        if started[i] {
            continue;
        }
        let when = arrivals[i].max(switch_at).max(fcfs[0]);
        let j = free.iter().position(|&f| f == fcfs[0]).expect("free time present");
        initiation[i] = when;
        server[i] = j;
        fcfs[0] = when + durations[m];
        free[j] = fcfs[0];
        resort_first(&mut fcfs);
        rank[i] = m;
        m += 1;
        fcfs_states.push((arrivals[i], fcfs.clone()));
    }
    let entries: Vec<ServiceEntry> = (0..n)
        .map(|i| ServiceEntry {
            arrival: arrivals[i],
            initiation: initiation[i],
            duration: durations[rank[i]],
            server: server[i],
        })
        .collect();
    let mut initiations: Vec<f64> = entries.iter().map(|e| e.initiation).collect();
    initiations.sort_by(f64::total_cmp);
    let mut departures: Vec<f64> = entries.iter().map(|e| e.departure()).collect();
    departures.sort_by(f64::total_cmp);
    SwitchingTrace { entries, initiations, departures, switch_at, free_at_switch, fcfs_states }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fa(time: f64, duration: f64) -> ForwardArrival {
        ForwardArrival { time, duration }
    }

    fn feed(items: &[(f64, f64)]) -> Vec<FeedItem> {
        items.iter().map(|&(arrival, duration)| FeedItem::new(arrival, duration)).collect()
    }

    #[test]
    fn mg1_examples() {
        let r = replay_mg1_fcfs(&[fa(0.0, 1.0), fa(0.5, 1.0)]);
        assert_eq!(r.initiations, vec![0.0, 1.0]);
        assert_eq!(r.departures, vec![1.0, 2.0]);
        assert_eq!(r.emptyings, vec![2.0]);
        let r = replay_mg1_fcfs(&[fa(0.0, 3.0)]);
        assert_eq!((r.initiations[0], r.departures[0]), (0.0, 3.0));
        let r = replay_mg1_fcfs(&[fa(1.0, 0.0), fa(2.0, 0.0)]);
        assert_eq!(r.initiations, vec![1.0, 2.0]);
        assert_eq!(r.departures, vec![1.0, 2.0]);
    }

    #[test]
    fn two_server_example() {
        let f = feed(&[(0.0, 2.0), (0.5, 2.0)]);
        let (trace, at1) = run_mgc_fcfs(2, &f, &WorkloadVector::zeros(2), 0.0, 1.0);
        assert_eq!(at1.as_slice(), &[1.0, 1.5]);
        assert_eq!(trace.departures, vec![2.0, 2.5]);
        assert_eq!(trace.count_at(1.0), 2);
    }

    #[test]
    fn serial_service_on_one_server() {
        let f = feed(&[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)]);
        let (trace, _) = run_mgc_fcfs(1, &f, &WorkloadVector::zeros(1), 0.0, 5.0);
        assert_eq!(trace.initiations, vec![0.0, 1.0, 2.0]);
        assert_eq!(trace.departures, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn empty_feed_decays_start() {
        let start = WorkloadVector::new(vec![0.5, 2.0, 4.0]).unwrap();
        let (trace, end) = run_mgc_fcfs(3, &[], &start, -2.0, 0.0);
        assert!(trace.arrivals.is_empty());
        assert_eq!(end, crate::kw::kw_decay(&start, 2.0));
    }

    #[test]
    fn arrivals_after_horizon_are_ignored() {
        let f = feed(&[(0.0, 1.0), (2.0, 1.0)]);
        let (trace, end) = run_mgc_fcfs(1, &f, &WorkloadVector::zeros(1), 0.0, 1.5);
        assert_eq!(trace.arrivals.len(), 1);
        assert_eq!(end.as_slice(), &[0.0]);
    }

    #[test]
    fn recorded_workload_is_piecewise_linear() {
        let f = feed(&[(0.0, 2.0), (0.5, 2.0), (1.0, 3.0)]);
        let (trace, end) = run_mgc_fcfs_with(2, &f, &WorkloadVector::zeros(2), 0.0, 4.0, true);
        assert_eq!(trace.workload_at(0.25).as_slice(), &[0.0, 1.75]);
        assert_eq!(trace.workload_at(1.0).as_slice(), &[1.5, 4.0]);
        assert_eq!(trace.workload_at(4.0), end);
    }

    #[test]
    fn reorder_examples() {
        let e = |j: f64, s: f64, t: f64, server: usize| ServiceEntry { arrival: t, initiation: j, duration: s, server };
        assert_eq!(reorder_by_initiation(&[e(3.0, 1.0, 0.0, 0), e(1.0, 2.0, 0.0, 0), e(2.0, 3.0, 0.0, 0)]), vec![2.0, 3.0, 1.0]);
        assert_eq!(reorder_by_initiation(&[e(1.0, 1.0, 0.0, 0), e(2.0, 2.0, 0.0, 0)]), vec![1.0, 2.0]);
        assert_eq!(reorder_by_initiation(&[e(1.0, 7.0, 0.0, 1), e(1.0, 8.0, 0.0, 1)]), vec![7.0, 8.0]);
        // Ties on J fall back to arrival, then server.
        assert_eq!(reorder_by_initiation(&[e(1.0, 7.0, 0.5, 0), e(1.0, 8.0, 0.2, 1)]), vec![8.0, 7.0]);
        assert_eq!(reorder_by_initiation(&[e(1.0, 7.0, 0.5, 2), e(1.0, 8.0, 0.5, 1)]), vec![8.0, 7.0]);
    }

    #[test]
    fn pure_fcfs_switching_matches_replay() {
        let arrivals = [0.0, 0.1, 0.3, 0.4, 2.0, 2.1];
        let durations = [1.0, 3.0, 0.5, 2.0, 1.0, 0.25];
        let sw = simulate_switching(2, &arrivals, &[0, 1, 0, 1, 0, 1], &durations, f64::NEG_INFINITY);
        let items: Vec<FeedItem> =
            arrivals.iter().zip(&durations).map(|(&a, &d)| FeedItem::new(a, d)).collect();
        let (trace, _) = run_mgc_fcfs(2, &items, &WorkloadVector::zeros(2), 0.0, 10.0);
        assert_eq!(sw.initiations, trace.initiations);
        assert_eq!(sw.departures, trace.sorted_departures());
    }

    #[test]
    fn pure_ra_is_per_server_fcfs() {
        let arrivals = [0.0, 0.1, 0.3, 0.4];
        let durations = [1.0, 3.0, 0.5, 2.0];
        let sw = simulate_switching(2, &arrivals, &[0, 0, 1, 0], &durations, f64::INFINITY);
        // Server 0 takes customers 0, 1, 3; server 1 takes customer 2.
        // Initiation order: c0 at 0, c2 at 0.3, c1 at 1.0, c3 at 1.0 + 0.5.
        let j: Vec<f64> = sw.entries.iter().map(|e| e.initiation).collect();
        assert_eq!(j, vec![0.0, 1.0, 0.3, 1.5]);
        let s: Vec<f64> = sw.entries.iter().map(|e| e.duration).collect();
        assert_eq!(s, vec![1.0, 0.5, 3.0, 2.0]);
    }
}
