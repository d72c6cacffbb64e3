//! The dominating process: `c` independent M/G/1 processor-sharing queues
//! started in equilibrium and simulated in reversed time.
//!
//! Under processor sharing each server's workload process is dynamically
//! reversible, so a departure at reversed time `t̂` carrying full duration
//! `S` is a forward-time arrival at `-t̂` with duration `S` to the same
//! server. The reversed path of every server is an append-only log driven by
//! its own random substreams; extending one server never changes logged
//! history nor another server's path.

use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric};
use serde::{Deserialize, Serialize};

use crate::dist::{QueueParams, ServiceDistribution};
use crate::error::{Error, Result};
use crate::rng::{substream, Direction, Purpose, StreamKey};

/// Default cap on reversed-time events per replication.
pub const DEFAULT_EVENT_BUDGET: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsCustomer {
    /// Work still to be done in reversed time.
    pub residual: f64,
    /// Full service duration brought by the customer.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PsServerState {
    pub customers: Vec<PsCustomer>,
    /// Reversed time `t̂`.
    pub clock: f64,
}

/// The next thing to happen at a processor-sharing server.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PsEvent {
    Arrival { elapsed: f64 },
    Departure { elapsed: f64, index: usize },
}

impl PsEvent {
    pub fn elapsed(&self) -> f64 {
        match *self {
            PsEvent::Arrival { elapsed } | PsEvent::Departure { elapsed, .. } => elapsed,
        }
    }
}

impl PsServerState {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Customers with totals `totals[i]` and residuals `uniforms[i] * totals[i]`.
    pub fn from_draws(totals: &[f64], uniforms: &[f64]) -> Self {
        assert_eq!(totals.len(), uniforms.len());
        let customers = totals
            .iter()
            .zip(uniforms)
            .map(|(&total, &u)| PsCustomer { residual: u * total, total })
            .collect();
        Self { customers, clock: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.customers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customers.is_empty()
    }

    pub fn workload(&self) -> f64 {
        self.customers.iter().map(|c| c.residual).sum()
    }

    fn min_residual(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.customers.iter().enumerate() {
            if best.is_none_or(|(_, r)| c.residual < r) {
                best = Some((i, c.residual));
            }
        }
        best
    }

    /// Compares the completion candidate (every residual drains at rate
    /// `1 / Q`) against an arrival at absolute reversed time `arrival_at`.
    /// Pass `f64::INFINITY` to suppress arrivals.
    pub fn next_event(&self, arrival_at: f64) -> PsEvent {
        let arrival_in = arrival_at - self.clock;
        match self.min_residual() {
            None => PsEvent::Arrival { elapsed: arrival_in },
            Some((index, residual)) => {
                let q = self.len() as f64;
                if arrival_in / q < residual {
                    PsEvent::Arrival { elapsed: arrival_in }
                } else {
                    PsEvent::Departure { elapsed: residual * q, index }
                }
            }
        }
    }

    /// Applies `event`; an arrival joins with `duration`. Returns the departed
    /// customer, if any.
    pub fn apply(&mut self, event: PsEvent, duration: f64) -> Option<PsCustomer> {
        let before = self.workload();
        match event {
            PsEvent::Arrival { elapsed } => {
                if !self.is_empty() {
                    let drain = elapsed / self.len() as f64;
                    for c in self.customers.iter_mut() {
                        c.residual = (c.residual - drain).max(0.0);
                    }
                }
                self.clock += elapsed;
                debug_assert_drained(before, self.workload(), elapsed, true);
                self.customers.push(PsCustomer { residual: duration, total: duration });
                None
            }
            PsEvent::Departure { elapsed, index } => {
                let drain = self.customers[index].residual;
                for c in self.customers.iter_mut() {
                    c.residual = (c.residual - drain).max(0.0);
                }
                self.clock += elapsed;
                let departed = self.customers.remove(index);
                debug_assert_drained(before, self.workload(), elapsed, true);
                Some(departed)
            }
        }
    }
}

/// Processor sharing is work conserving: a busy server removes exactly the
/// elapsed time from its total workload.
fn debug_assert_drained(before: f64, after: f64, elapsed: f64, busy: bool) {
    if cfg!(debug_assertions) && busy && before > 0.0 {
        let expected = (before - elapsed).max(0.0);
        debug_assert!(
            (after - expected).abs() <= 1e-9 * (1.0 + before),
            "drain accounting: {before} - {elapsed} != {after}"
        );
    }
}

/// Draws the next event with an exponential arrival gap at `arrival_rate`
/// (zero suppresses arrivals).
pub fn next_event<R: Rng + ?Sized>(state: &PsServerState, arrival_rate: f64, rng: &mut R) -> PsEvent {
    let gap = if arrival_rate > 0.0 {
        Exp::new(arrival_rate).expect("positive rate").sample(rng)
    } else {
        f64::INFINITY
    };
    state.next_event(state.clock + gap)
}

/// Equilibrium state of one server: a geometric number of customers with
/// `P(n) = (ρ/c)ⁿ(1 − ρ/c)`, each with a spread-distributed total and a
/// uniform fraction of it as residual.
pub fn draw_server_equilibrium<R: Rng + ?Sized>(params: &QueueParams, rng: &mut R) -> PsServerState {
    let load = params.per_server_load();
    let count = Geometric::new(1.0 - load).expect("stable load").sample(rng);
    let customers = (0..count)
        .map(|_| {
            let (total, residual) = params.service.sample_spread_pair(rng);
            PsCustomer { residual, total }
        })
        .collect();
    PsServerState { customers, clock: 0.0 }
}

/// Equilibrium draw of all `c` servers from a single stream.
pub fn draw_equilibrium_state<R: Rng + ?Sized>(params: &QueueParams, rng: &mut R) -> Vec<PsServerState> {
    (0..params.servers).map(|_| draw_server_equilibrium(params, rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Arrival,
    Departure,
}

/// One entry of the reversed-time log. Departures carry the full duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReversedEvent {
    pub t_hat: f64,
    pub server: usize,
    pub kind: EventKind,
    pub duration: f64,
}

/// A forward-time arrival to one server of the random-assignment system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardArrival {
    pub time: f64,
    pub duration: f64,
}

/// How far to extend a server's reversed path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// First reversed time `≥ t̂` at which the server is empty.
    EmptyAtOrAfter(f64),
    /// The next emptying strictly after the current `τ̂_j`.
    NextEmptying,
}

#[derive(Debug, Clone)]
struct EventBudget {
    used: u64,
    limit: u64,
}

impl EventBudget {
    fn charge(&mut self) -> Result<()> {
        self.used += 1;
        if self.used > self.limit {
            Err(Error::BudgetExceeded { limit: self.limit })
        } else {
            Ok(())
        }
    }
}

/// Cached Poisson arrivals with attached durations on `(0, ∞)`, generated
/// lazily so that growing horizons see a common prefix.
#[derive(Debug, Clone)]
struct ForwardExtension {
    gap: Exp<f64>,
    gaps: ChaCha8Rng,
    durations: ChaCha8Rng,
    arrivals: Vec<ForwardArrival>,
    next_time: f64,
}

impl ForwardExtension {
    fn new(rate: f64, mut gaps: ChaCha8Rng, durations: ChaCha8Rng) -> Self {
        let gap = Exp::new(rate).expect("positive rate");
        let next_time = gap.sample(&mut gaps);
        Self { gap, gaps, durations, arrivals: Vec::new(), next_time }
    }

    fn up_to(&mut self, horizon: f64, service: &ServiceDistribution) -> &[ForwardArrival] {
        while self.next_time <= horizon {
            let duration = service.sample(&mut self.durations);
            self.arrivals.push(ForwardArrival { time: self.next_time, duration });
            self.next_time += self.gap.sample(&mut self.gaps);
        }
        let n = self.arrivals.partition_point(|a| a.time <= horizon);
        &self.arrivals[..n]
    }
}

/// Reversed-time path of a single server.
#[derive(Debug, Clone)]
pub struct ServerPath {
    server: usize,
    service: ServiceDistribution,
    gap: Exp<f64>,
    state: PsServerState,
    initial: PsServerState,
    next_arrival: f64,
    events: Vec<ReversedEvent>,
    /// Idle periods `[start, end)`; `end` is the pre-drawn next arrival.
    idle: Vec<(f64, f64)>,
    tau: Option<f64>,
    gaps: ChaCha8Rng,
    durations: ChaCha8Rng,
    forward: ForwardExtension,
}

impl ServerPath {
    fn new(params: &QueueParams, root: u64, server: usize, state: PsServerState) -> Self {
        let rate = params.per_server_rate();
        let gap = Exp::new(rate).expect("positive rate");
        let key = |direction, purpose| StreamKey::new(server, direction, purpose);
        let mut gaps = substream(root, key(Direction::Reversed, Purpose::Gaps));
        let durations = substream(root, key(Direction::Reversed, Purpose::Durations));
        let forward = ForwardExtension::new(
            rate,
            substream(root, key(Direction::Forward, Purpose::Gaps)),
            substream(root, key(Direction::Forward, Purpose::Durations)),
        );
        let next_arrival = gap.sample(&mut gaps);
        let mut idle = Vec::new();
        if state.is_empty() {
            idle.push((0.0, next_arrival));
        }
        Self {
            server,
            service: params.service,
            gap,
            initial: state.clone(),
            state,
            next_arrival,
            events: Vec::new(),
            idle,
            tau: None,
            gaps,
            durations,
            forward,
        }
    }

    pub fn server(&self) -> usize {
        self.server
    }

    pub fn initial_state(&self) -> &PsServerState {
        &self.initial
    }

    pub fn state(&self) -> &PsServerState {
        &self.state
    }

    pub fn events(&self) -> &[ReversedEvent] {
        &self.events
    }

    pub fn idle_periods(&self) -> &[(f64, f64)] {
        &self.idle
    }

    /// Current `τ̂_j`, once a stopping rule has been applied.
    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    /// Reversed time simulated so far.
    pub fn horizon(&self) -> f64 {
        self.state.clock
    }

    fn next_event_time(&self) -> f64 {
        let ev = self.state.next_event(self.next_arrival);
        self.state.clock + ev.elapsed()
    }

    fn is_idle_at(&self, t: f64) -> bool {
        self.state.is_empty() && self.state.clock <= t && t < self.next_arrival
    }

    fn step(&mut self, budget: &mut EventBudget) -> Result<ReversedEvent> {
        budget.charge()?;
        let event = self.state.next_event(self.next_arrival);
        let record = match event {
            PsEvent::Arrival { .. } => {
                let duration = self.service.sample(&mut self.durations);
                self.state.apply(event, duration);
                // Land exactly on the pre-drawn arrival time.
                self.state.clock = self.next_arrival;
                self.next_arrival += self.gap.sample(&mut self.gaps);
                ReversedEvent { t_hat: self.state.clock, server: self.server, kind: EventKind::Arrival, duration }
            }
            PsEvent::Departure { .. } => {
                let departed = self.state.apply(event, 0.0).expect("departure removes a customer");
                if self.state.is_empty() {
                    self.idle.push((self.state.clock, self.next_arrival));
                }
                ReversedEvent {
                    t_hat: self.state.clock,
                    server: self.server,
                    kind: EventKind::Departure,
                    duration: departed.total,
                }
            }
        };
        if let Some(last) = self.events.last() {
            assert!(record.t_hat >= last.t_hat, "reversed events out of order on server {}", self.server);
        }
        self.events.push(record);
        Ok(record)
    }

    fn extend(&mut self, rule: StoppingRule, budget: &mut EventBudget) -> Result<f64> {
        let tau = match rule {
            StoppingRule::EmptyAtOrAfter(t) => loop {
                let i = self.idle.partition_point(|&(_, end)| end <= t);
                if let Some(&(start, _)) = self.idle.get(i) {
                    break start.max(t);
                }
                self.step(budget)?;
            },
            StoppingRule::NextEmptying => {
                let after = self.tau.unwrap_or(f64::NEG_INFINITY);
                loop {
                    let i = self.idle.partition_point(|&(start, _)| start <= after);
                    if let Some(&(start, _)) = self.idle.get(i) {
                        break start;
                    }
                    self.step(budget)?;
                }
            }
        };
        self.tau = Some(tau);
        Ok(tau)
    }

    /// Forward arrivals on `[-τ̂_j, 0]`: reversed departures with sign flipped
    /// and order reversed, each carrying its full duration.
    pub fn reverse_to_forward(&self) -> Vec<ForwardArrival> {
        let tau = self.tau.expect("tau must be set before reversal");
        reverse_departures(&self.events, tau)
    }
}

/// Departures with `t̂ ≤ upto`, as increasing forward-time arrivals.
pub fn reverse_departures(events: &[ReversedEvent], upto: f64) -> Vec<ForwardArrival> {
    events
        .iter()
        .rev()
        .filter(|e| e.kind == EventKind::Departure && e.t_hat <= upto)
        .map(|e| ForwardArrival { time: -e.t_hat, duration: e.duration })
        .collect()
}

/// The reversed `[M/G/1 PS]^c` dominating process of one replication.
#[derive(Debug, Clone)]
pub struct DominatingPath {
    params: QueueParams,
    root: u64,
    servers: Vec<ServerPath>,
    budget: EventBudget,
    all_empty: Option<f64>,
}

impl DominatingPath {
    /// Equilibrium start: each server draws its state from its own substream.
    pub fn new(params: QueueParams, root: u64, event_limit: u64) -> Self {
        let states = (0..params.servers)
            .map(|j| {
                let mut rng = substream(root, StreamKey::new(j, Direction::Reversed, Purpose::Equilibrium));
                draw_server_equilibrium(&params, &mut rng)
            })
            .collect();
        Self::from_states(params, root, states, event_limit)
    }

    /// Starts from explicit per-server states at `t̂ = 0`.
    pub fn from_states(params: QueueParams, root: u64, states: Vec<PsServerState>, event_limit: u64) -> Self {
        assert_eq!(states.len(), params.servers);
        let servers = states
            .into_iter()
            .enumerate()
            .map(|(j, s)| ServerPath::new(&params, root, j, s))
            .collect();
        Self { params, root, servers, budget: EventBudget { used: 0, limit: event_limit }, all_empty: None }
    }

    pub fn params(&self) -> &QueueParams {
        &self.params
    }

    pub fn root_seed(&self) -> u64 {
        self.root
    }

    pub fn servers(&self) -> &[ServerPath] {
        &self.servers
    }

    pub fn server(&self, j: usize) -> &ServerPath {
        &self.servers[j]
    }

    pub fn tau(&self, j: usize) -> Option<f64> {
        self.servers[j].tau
    }

    pub fn events_simulated(&self) -> u64 {
        self.budget.used
    }

    /// Customers present at `t̂ = 0` over all servers.
    pub fn initial_customers(&self) -> usize {
        self.servers.iter().map(|s| s.initial.len()).sum()
    }

    /// Extends server `j` under `rule` and returns the new `τ̂_j`.
    pub fn extend_until(&mut self, j: usize, rule: StoppingRule) -> Result<f64> {
        self.servers[j].extend(rule, &mut self.budget)
    }

    /// Runs all servers in merged reversed-time order until the first `t̂` at
    /// which every server is empty, then sets `τ̂_j = τ̂` for every `j`.
    pub fn extend_until_all_empty(&mut self) -> Result<f64> {
        if let Some(tau) = self.all_empty {
            return Ok(tau);
        }
        let tau = if self.servers.iter().all(|s| s.is_idle_at(0.0)) {
            0.0
        } else {
            loop {
                let j = (0..self.servers.len())
                    .min_by(|&a, &b| {
                        self.servers[a].next_event_time().total_cmp(&self.servers[b].next_event_time())
                    })
                    .expect("at least one server");
                let ev = self.servers[j].step(&mut self.budget)?;
                if ev.kind == EventKind::Departure
                    && self.servers[j].state.is_empty()
                    && self.servers.iter().all(|s| s.is_idle_at(ev.t_hat))
                {
                    break ev.t_hat;
                }
            }
        };
        for s in self.servers.iter_mut() {
            s.tau = Some(tau);
        }
        self.all_empty = Some(tau);
        Ok(tau)
    }

    pub fn reverse_to_forward(&self, j: usize) -> Vec<ForwardArrival> {
        self.servers[j].reverse_to_forward()
    }

    /// Fresh forward arrivals to server `j` on `(0, horizon]`.
    pub fn extend_forward(&mut self, j: usize, horizon: f64) -> &[ForwardArrival] {
        let server = &mut self.servers[j];
        server.forward.up_to(horizon, &server.service)
    }

    /// Writes every logged event as one JSON object per line, server by server.
    pub fn write_event_log<W: Write>(&self, mut out: W) -> io::Result<()> {
        for s in &self.servers {
            for e in &s.events {
                serde_json::to_writer(&mut out, e)?;
                out.write_all(b"\n")?;
            }
        }
        Ok(())
    }
}
