//! Randomised checks of the pathwise orderings the samplers rely on.
//!
//! Each check builds one seeded instance and returns `Err` describing the
//! first violation found.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::cftp::{algorithm1_run, algorithm2_with, coalesced, round_at, Round, SamplerConfig};
use crate::dist::{QueueParams, ServiceDistribution};
use crate::forward::{run_mgc_fcfs_with, simulate_switching, FcfsTrace, FeedItem};
use crate::kw::WorkloadVector;

/// Slack for comparing workload vectors produced by different arithmetic
/// paths (residuals at `T` versus replayed departures).
pub const VECTOR_SLACK: f64 = 1e-9;

pub type Check = std::result::Result<(), String>;

fn poisson_times<R: Rng>(rng: &mut R, rate: f64, n: usize, start: f64) -> Vec<f64> {
    let gap = Exp::new(rate).expect("positive rate");
    let mut t = start;
    (0..n)
        .map(|_| {
            t += gap.sample(rng);
            t
        })
        .collect()
}

fn exp_durations<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let e = Exp::new(1.0).expect("unit rate");
    (0..n).map(|_| e.sample(rng)).collect()
}

/// Times between and at recorded events; midpoints avoid comparing at the
/// exact instant a departure is computed along two arithmetic paths.
fn probe_times(mut events: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    events.retain(|t| (lo..=hi).contains(t));
    events.push(lo);
    events.push(hi);
    events.sort_by(f64::total_cmp);
    events.dedup();
    let mut probes: Vec<f64> = events.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    probes.push(hi);
    probes
}

fn dominated(lo: &WorkloadVector, hi: &WorkloadVector, slack: f64) -> bool {
    lo.dominated_by_within(hi, slack)
}

/// Same arrivals, durations `S ≤ S'`: initiations, departures and workload
/// vectors of the FCFS queue are ordered.
pub fn fcfs_monotone(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = [1, 2, 3, 5][(seed % 4) as usize];
    let n = rng.random_range(5..60);
    let arrivals = poisson_times(&mut rng, 0.9 * c as f64, n, 0.0);
    let zeros = rng.random_range(0..3).min(n);
    let mut s = exp_durations(&mut rng, n);
    let mut s2: Vec<f64> = s.iter().map(|&x| if rng.random_bool(0.3) { x } else { x + rng.random::<f64>() }).collect();
    for i in 0..zeros {
        s[i] = 0.0;
        if rng.random_bool(0.5) {
            s2[i] = 0.0;
        }
    }
    let feed = |d: &[f64]| -> Vec<FeedItem> {
        arrivals.iter().zip(d).map(|(&arrival, &duration)| FeedItem::new(arrival, duration)).collect()
    };
    let zero = WorkloadVector::zeros(c);
    let horizon = arrivals.last().copied().unwrap_or(0.0) + 10.0;
    let (a, _) = run_mgc_fcfs_with(c, &feed(&s), &zero, 0.0, horizon, true);
    let (b, _) = run_mgc_fcfs_with(c, &feed(&s2), &zero, 0.0, horizon, true);
    for m in 0..n {
        if a.initiations[m] > b.initiations[m] {
            return Err(format!("seed {seed}: J_{m} {} > {}", a.initiations[m], b.initiations[m]));
        }
    }
    let (da, db) = (a.sorted_departures(), b.sorted_departures());
    if let Some(m) = (0..n).find(|&m| da[m] > db[m]) {
        return Err(format!("seed {seed}: D_{m} {} > {}", da[m], db[m]));
    }
    for t in probe_times([a.arrivals.clone(), da, db].concat(), 0.0, horizon) {
        if !a.workload_at(t).dominated_by(&b.workload_at(t)) {
            return Err(format!("seed {seed}: workload not dominated at t = {t}"));
        }
    }
    Ok(())
}

fn count(arrivals: &[f64], departures: &[f64], t: f64) -> usize {
    let arrived = arrivals.iter().filter(|&&a| a <= t).count();
    let left = departures.iter().filter(|&&d| d <= t).count();
    arrived - left
}

/// Same arrivals, later initiations and longer durations in initiation
/// order: the number in system is at least as large at every time.
pub fn count_domination(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = [1, 2, 3, 5][(seed % 4) as usize];
    let n = rng.random_range(5..60);
    let arrivals = poisson_times(&mut rng, 0.9 * c as f64, n, 0.0);
    let assignment: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let s = exp_durations(&mut rng, n);
    let s2: Vec<f64> = s.iter().map(|&x| x + rng.random::<f64>() * 0.5).collect();
    let switch = arrivals[n - 1] * rng.random::<f64>();
    // Random assignment then FCFS initiates no earlier than FCFS throughout.
    let first = simulate_switching(c, &arrivals, &assignment, &s, f64::NEG_INFINITY);
    let second = simulate_switching(c, &arrivals, &assignment, &s2, switch);
    for m in 0..n {
        if second.initiations[m] < first.initiations[m] {
            return Err(format!("seed {seed}: precondition J~_{m} < J_{m}"));
        }
    }
    let horizon = second.departures[n - 1].max(first.departures[n - 1]) + 1.0;
    for t in probe_times([arrivals.clone(), first.departures.clone(), second.departures.clone()].concat(), 0.0, horizon) {
        let (x, y) = (count(&arrivals, &first.departures, t), count(&arrivals, &second.departures, t));
        if y < x {
            return Err(format!("seed {seed}: count {y} < {x} at t = {t}"));
        }
        if second.count_at(t) != y || first.count_at(t) != x {
            return Err(format!("seed {seed}: count bookkeeping disagrees at t = {t}"));
        }
    }
    Ok(())
}

/// Random assignment throughout, switching to FCFS at `T`, at `T' ≤ T`, and
/// FCFS throughout: each case dominates the next in `m`-th initiations and
/// departures, and in workload vectors once both are FCFS.
pub fn switching_domination(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = [2, 3, 5][(seed % 3) as usize];
    let n = rng.random_range(10..60);
    let arrivals = poisson_times(&mut rng, 0.9 * c as f64, n, 0.0);
    let assignment: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
    let s = exp_durations(&mut rng, n);
    let end = arrivals[n - 1];
    let t_late = end * rng.random::<f64>();
    let t_early = t_late * rng.random::<f64>();
    let cases = [f64::INFINITY, t_late, t_early, f64::NEG_INFINITY]
        .map(|sw| simulate_switching(c, &arrivals, &assignment, &s, sw));
    for k in 0..3 {
        let (hi, lo) = (&cases[k], &cases[k + 1]);
        for m in 0..n {
            if lo.initiations[m] > hi.initiations[m] {
                return Err(format!("seed {seed}: case {} initiation {m} later than case {}", k + 2, k + 1));
            }
            if lo.departures[m] > hi.departures[m] {
                return Err(format!("seed {seed}: case {} departure {m} later than case {}", k + 2, k + 1));
            }
        }
    }
    let events: Vec<f64> = [arrivals.clone(), cases[1].departures.clone(), cases[2].departures.clone(), cases[3].departures.clone()].concat();
    let horizon = cases[1].departures[n - 1].max(cases[2].departures[n - 1]) + 1.0;
    for t in probe_times(events.clone(), t_early, horizon) {
        if !dominated(&cases[3].workload_at(t), &cases[2].workload_at(t), VECTOR_SLACK) {
            return Err(format!("seed {seed}: case 4 workload exceeds case 3 at t = {t}"));
        }
    }
    for t in probe_times(events, t_late, horizon) {
        if !dominated(&cases[2].workload_at(t), &cases[1].workload_at(t), VECTOR_SLACK) {
            return Err(format!("seed {seed}: case 3 workload exceeds case 2 at t = {t}"));
        }
    }
    Ok(())
}

/// A spread of stable parameter sets for the sampler-level checks.
pub fn instance_params(seed: u64) -> QueueParams {
    let services = [
        ServiceDistribution::exponential(2.0).unwrap(),
        ServiceDistribution::uniform(0.0, 1.0).unwrap(),
        ServiceDistribution::deterministic(0.5).unwrap(),
        ServiceDistribution::erlang(2, 4.0).unwrap(),
    ];
    let cs = [1usize, 2, 3, 5, 10];
    let service = services[(seed % 4) as usize];
    let c = cs[((seed / 4) % 5) as usize];
    // Per-server load between 0.3 and 0.7.
    let load = 0.3 + 0.1 * ((seed / 20) % 5) as f64;
    let lambda = load * c as f64 / service.mean();
    QueueParams::new(lambda, c, service).expect("stable by construction")
}

fn trace_events(trace: &FcfsTrace) -> Vec<f64> {
    [trace.arrivals.clone(), trace.departures.clone()].concat()
}

/// Envelope chain `L_T ⊴ L_T' ⊴ U_T' ⊴ U_T` across every pair of back-off
/// rounds of one run, with `|U| ≤ |Y|` on `[T, 0]` and list consistency
/// between rounds.
pub fn sandwich(seed: u64) -> Check {
    let params = instance_params(seed);
    let mut rounds: Vec<Round> = Vec::new();
    algorithm2_with(&params, seed, &SamplerConfig::default(), true, |r| rounds.push(r.clone()))
        .map_err(|e| format!("seed {seed}: {e}"))?;
    for r in &rounds {
        upper_below_dominating(seed, r)?;
    }
    for (k, late) in rounds.iter().enumerate() {
        for early in &rounds[..k] {
            chain(seed, early, late)?;
        }
    }
    Ok(())
}

fn upper_below_dominating(seed: u64, r: &Round) -> Check {
    let t0 = r.lists.horizon;
    let u = &r.envelopes.upper_trace;
    for t in probe_times(trace_events(u), t0, 0.0) {
        let (nu, ny) = (u.count_at(t), r.dominating.count_at(t));
        if nu > ny {
            return Err(format!("seed {seed}: |U| = {nu} > |Y| = {ny} at t = {t}, T = {t0}"));
        }
        let nl = r.envelopes.lower_trace.count_at(t);
        if nl > nu {
            return Err(format!("seed {seed}: |L| = {nl} > |U| = {nu} at t = {t}"));
        }
    }
    Ok(())
}

/// `early` starts at `T`, `late` at `T' < T`:
/// `L_T ⊴ L_T' ⊴ U_T' ⊴ U_T` on `[T, 0]`.
fn chain(seed: u64, early: &Round, late: &Round) -> Check {
    let t = early.lists.horizon;
    let (eu, el) = (&early.envelopes.upper_trace, &early.envelopes.lower_trace);
    let (lu, ll) = (&late.envelopes.upper_trace, &late.envelopes.lower_trace);
    let events = [trace_events(eu), trace_events(el), trace_events(lu), trace_events(ll)].concat();
    for s in probe_times(events, t, 0.0) {
        let v = [el.workload_at(s), ll.workload_at(s), lu.workload_at(s), eu.workload_at(s)];
        for i in 0..3 {
            if !dominated(&v[i], &v[i + 1], VECTOR_SLACK) {
                return Err(format!(
                    "seed {seed}: chain link {i} broken at t = {s} (T = {t}, T' = {}): {:?} vs {:?}",
                    late.lists.horizon, v[i], v[i + 1]
                ));
            }
        }
    }
    // Customers arriving after T are listed identically by both rounds.
    let restricted: Vec<_> = late.dominating.entries.iter().filter(|e| e.arrival > t).copied().collect();
    if restricted != early.lists.post {
        return Err(format!("seed {seed}: post-T list changed between T = {t} and T' = {}", late.lists.horizon));
    }
    Ok(())
}

/// Lighter loads for Algorithm 1, whose run time grows like `(1 − ρ/c)^(−c)`.
pub fn regenerative_params(seed: u64) -> QueueParams {
    let p = instance_params(seed);
    let load = 0.3 + 0.1 * ((seed / 20) % 3) as f64;
    QueueParams::new(load * p.servers as f64 / p.service.mean(), p.servers, p.service).expect("stable")
}

/// `|X| ≤ |Y|` over `[-τ̂, 0]` for Algorithm 1.
pub fn target_below_dominating(seed: u64) -> Check {
    let params = regenerative_params(seed);
    let run = algorithm1_run(&params, seed, &SamplerConfig::default(), true).map_err(|e| format!("seed {seed}: {e}"))?;
    for t in probe_times(trace_events(&run.target), -run.tau, 0.0) {
        let (nx, ny) = (run.target.count_at(t), run.dominating.count_at(t));
        if nx > ny {
            return Err(format!("seed {seed}: |X| = {nx} > |Y| = {ny} at t = {t}"));
        }
    }
    Ok(())
}

/// The instant from which the envelopes agree up to zero, if they do.
fn coupling_time(env: &crate::cftp::Envelopes, horizon: f64) -> Option<f64> {
    let (u, l) = (&env.upper_trace, &env.lower_trace);
    let mut events = [trace_events(u), trace_events(l)].concat();
    events.retain(|t| (horizon..=0.0).contains(t));
    events.push(horizon);
    events.push(0.0);
    events.sort_by(f64::total_cmp);
    events.dedup();
    let probes = probe_times(events.clone(), horizon, 0.0);
    let agree = |t: f64| u.workload_at(t) == l.workload_at(t);
    let last_disagreement = probes.iter().chain(&events).copied().filter(|&t| !agree(t)).fold(f64::NEG_INFINITY, f64::max);
    if last_disagreement == f64::NEG_INFINITY {
        return Some(horizon);
    }
    events.into_iter().find(|&t| t > last_disagreement && agree(t))
}

/// Envelopes that coalesce first meet at an instant when both have an idle
/// server, agree on the count at zero, and later horizons return the same
/// vector.
pub fn coalescence(seed: u64) -> Check {
    let params = instance_params(seed);
    let c = params.servers;
    let (sample, mut path) = algorithm2_with(&params, seed, &SamplerConfig::default(), false, |_| {})
        .map_err(|e| format!("seed {seed}: {e}"))?;
    let env_check = |r: &Round| -> Check {
        if !r.coalesced() {
            return Err(format!("seed {seed}: no coalescence at T̂ = {}", r.t_hat));
        }
        let env = &r.envelopes;
        let Some(meet) = coupling_time(env, r.lists.horizon) else {
            return Err(format!("seed {seed}: envelopes agree at 0 but no coupling instant found"));
        };
        let (nu, nl) = (env.upper_trace.count_at(meet), env.lower_trace.count_at(meet));
        if nu >= c || nl >= c {
            return Err(format!("seed {seed}: coupled at t = {meet} with counts {nu}/{nl} and c = {c}"));
        }
        let (nu, nl) = (env.upper_trace.count_at(0.0), env.lower_trace.count_at(0.0));
        if nu != nl {
            return Err(format!("seed {seed}: coalesced vectors but counts {nu} != {nl}"));
        }
        if nu < c && env.upper.zero_count() != c - nu {
            return Err(format!("seed {seed}: zero coordinates disagree with count"));
        }
        Ok(())
    };
    let first = round_at(&mut path, sample.diagnostics.horizon, true).map_err(|e| e.to_string())?;
    env_check(&first)?;
    for factor in [2.0, 4.0] {
        let later = round_at(&mut path, sample.diagnostics.horizon * factor, true).map_err(|e| e.to_string())?;
        env_check(&later)?;
        if !coalesced(&later.envelopes.upper, &sample.workload) {
            return Err(format!(
                "seed {seed}: T̂ = {} gives {:?}, coalesced sample was {:?}",
                later.t_hat, later.envelopes.upper, sample.workload
            ));
        }
    }
    Ok(())
}

/// Runs `check` on seeds `0..n` and collects the violations.
pub fn run_suite(n: u64, check: impl Fn(u64) -> Check) -> Vec<String> {
    (0..n).filter_map(|seed| check(seed).err()).collect()
}
