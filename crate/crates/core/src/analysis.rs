//! Closed-form validation targets and goodness-of-fit tests.
//!
//! Contains the M/M/c stationary law of the number in system, a pooled
//! Pearson chi-squared test against it, Kolmogorov-Smirnov tests for the
//! samplers and for comparing two samplers, and the run-time bound formulas
//! for both algorithms.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Tail mass below which the stationary pmf is truncated.
pub const TAIL_MASS: f64 = 1e-12;

/// Minimum expected count per chi-squared bin after pooling.
pub const MIN_EXPECTED: f64 = 5.0;

/// Probabilities `π_0 … π_K`; the mass beyond `K` is below [`TAIL_MASS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPmf {
    pub probabilities: Vec<f64>,
    pub mean: f64,
}

impl StationaryPmf {
    pub fn from_probabilities(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() || probabilities.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidParameter("pmf entries must be finite and non-negative".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if !(1.0 - 1e-9..=1.0 + 1e-12).contains(&total) {
            return Err(Error::InvalidParameter(format!("pmf sums to {total}")));
        }
        let mean = probabilities.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        Ok(Self { probabilities, mean })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn get(&self, k: usize) -> f64 {
        self.probabilities.get(k).copied().unwrap_or(0.0)
    }
}

/// Stationary number-in-system of the M/M/c queue,
/// `π_k ∝ (ρ/c)^k c^(k∧c) / (k∧c)!`, computed in log space.
pub fn mmc_stationary(lambda: f64, mu: f64, c: usize) -> Result<StationaryPmf> {
    if !(lambda > 0.0 && mu > 0.0 && c >= 1) {
        return Err(Error::InvalidParameter(format!("lambda={lambda}, mu={mu}, c={c}")));
    }
    let rho = lambda / mu;
    let cf = c as f64;
    if rho >= cf {
        return Err(Error::Unstable { rho, servers: c });
    }
    let ratio = rho / cf;
    let ln_rho = rho.ln();
    let ln_ratio = ratio.ln();
    // ln of the unnormalised weights.
    let mut logs = vec![0.0];
    let mut ln_fact = 0.0;
    for k in 1..=c {
        ln_fact += (k as f64).ln();
        logs.push(k as f64 * ln_rho - ln_fact);
    }
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
    let mut partial: f64 = weights.iter().sum();
    // Beyond c the weights are geometric with ratio ρ/c.
    let mut last = *weights.last().expect("non-empty");
    let mut tail = last * ratio / (1.0 - ratio);
    while tail > TAIL_MASS * (partial + tail) {
        let next = (logs[c] + (weights.len() - c) as f64 * ln_ratio - peak).exp();
        weights.push(next);
        partial += next;
        last = next;
        tail = last * ratio / (1.0 - ratio);
    }
    let z = partial + tail;
    let probabilities: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let mean = probabilities.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    Ok(StationaryPmf { probabilities, mean })
}

/// One pooled cell of a chi-squared table; `high = None` means `k ≥ low`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiBin {
    pub low: usize,
    pub high: Option<usize>,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquaredReport {
    pub n: u64,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub bins: Vec<ChiBin>,
}

/// Tallies non-negative integer observations into counts indexed by value.
pub fn histogram(values: impl IntoIterator<Item = usize>) -> Vec<u64> {
    let mut counts = Vec::new();
    for v in values {
        if v >= counts.len() {
            counts.resize(v + 1, 0);
        }
        counts[v] += 1;
    }
    counts
}

/// Pearson goodness of fit of `observed[k]` against `pmf`. Adjacent cells
/// are pooled from the left until each expects at least five; the last cell
/// is open-ended and carries the remaining mass.
pub fn chi_squared_gof(observed: &[u64], pmf: &StationaryPmf) -> Result<ChiSquaredReport> {
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::InsufficientData("no observations".into()));
    }
    let nf = n as f64;
    let support = pmf.len().max(observed.len());
    let mut bins: Vec<ChiBin> = Vec::new();
    let mut low = 0;
    let mut obs = 0;
    let mut mass = 0.0;
    let mut used = 0.0;
    for k in 0..support {
        obs += observed.get(k).copied().unwrap_or(0);
        mass += pmf.get(k);
        if mass * nf >= MIN_EXPECTED {
            bins.push(ChiBin { low, high: Some(k), observed: obs, expected: mass * nf });
            used += mass;
            low = k + 1;
            obs = 0;
            mass = 0.0;
        }
    }
    // Whatever mass remains forms the open upper cell, merged down if small.
    let rest = (1.0 - used).max(0.0) * nf;
    if rest >= MIN_EXPECTED {
        bins.push(ChiBin { low, high: None, observed: obs, expected: rest });
    } else if let Some(prev) = bins.last_mut() {
        prev.high = None;
        prev.observed += obs;
        prev.expected += rest;
    }
    if bins.len() < 2 {
        return Err(Error::InsufficientData(format!("{} bin(s) after pooling", bins.len())));
    }
    let statistic = bins.iter().map(|b| (b.observed as f64 - b.expected).powi(2) / b.expected).sum();
    let df = bins.len() - 1;
    let p_value = ChiSquared::new(df as f64).expect("df >= 1").sf(statistic);
    Ok(ChiSquaredReport { n, statistic, df, p_value, bins })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov tail `P(K > x)`.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * x * x).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let s = effective_n.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    assert!(!samples.is_empty(), "KS test needs samples");
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    KsResult { statistic: d, p_value: ks_p_value(d, n) }
}

/// Two-sample Kolmogorov-Smirnov test; ties are stepped over together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty(), "KS test needs samples");
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    KsResult { statistic: d, p_value: ks_p_value(d, n * m / (n + m)) }
}

/// Lower bound on the mean full-emptying time of the dominating process,
/// `((1 − ρ/c)^(−c) − 2) / λ`, clamped at zero.
pub fn alg1_runtime_lower_bound(lambda: f64, c: usize, rho: f64) -> f64 {
    let cf = c as f64;
    let raw = ((1.0 - rho / cf).powf(-cf) - 2.0) / lambda;
    raw.max(0.0)
}

/// Heuristic over-estimate of the mean coalescence time,
/// `(1/λ)·(cρ/(c − ρ))·E[X₀]`.
pub fn alg2_runtime_heuristic(lambda: f64, c: usize, rho: f64, mean_customers: f64) -> f64 {
    let cf = c as f64;
    if rho >= cf {
        return f64::INFINITY;
    }
    cf * rho / (cf - rho) * mean_customers / lambda
}

/// [`alg2_runtime_heuristic`] with `E[X₀]` from the M/M/c law at `μ = λ/ρ`.
pub fn alg2_runtime_heuristic_mmc(lambda: f64, c: usize, rho: f64) -> Result<f64> {
    let pmf = mmc_stationary(lambda, lambda / rho, c)?;
    Ok(alg2_runtime_heuristic(lambda, c, rho, pmf.mean))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Mean number in system from the Erlang C delay probability.
    fn erlang_c_mean(rho: f64, c: usize) -> f64 {
        let cf = c as f64;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..c {
            term *= rho / k as f64;
            sum += term;
        }
        let top = term * rho / cf / (1.0 - rho / cf);
        let delay = top / (sum + top);
        rho + delay * rho / (cf - rho)
    }

    #[test]
    fn single_server_is_geometric() {
        let pmf = mmc_stationary(1.0, 2.0, 1).unwrap();
        for (k, p) in pmf.probabilities.iter().enumerate() {
            let expect = 0.5f64.powi(k as i32) * 0.5;
            assert!((p - expect).abs() <= 1e-15, "k={k}: {p} vs {expect}");
        }
        assert!((pmf.mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pmf_is_normalised_and_balanced() {
        for &(lambda, mu, c) in &[(10.0, 2.0, 10), (30.0, 2.0, 30), (50.0, 2.0, 50), (29.5, 1.0, 30), (3.0, 1.0, 4)] {
            let pmf = mmc_stationary(lambda, mu, c).unwrap();
            let total: f64 = pmf.probabilities.iter().sum();
            assert!((1.0 - 1e-9..=1.0).contains(&total), "{total}");
            for k in 0..pmf.len() - 1 {
                let lhs = lambda * pmf.probabilities[k];
                let rhs = mu * ((k + 1).min(c) as f64) * pmf.probabilities[k + 1];
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(rhs), "k={k}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn mean_matches_erlang_c() {
        for &(lambda, mu, c) in &[(10.0, 2.0, 10), (30.0, 2.0, 30), (25.0, 1.0, 30), (7.0, 1.0, 8)] {
            let pmf = mmc_stationary(lambda, mu, c).unwrap();
            let oracle = erlang_c_mean(lambda / mu, c);
            assert!((pmf.mean - oracle).abs() < 1e-9 * oracle, "{} vs {oracle}", pmf.mean);
        }
        assert_eq!(format!("{:.2}", mmc_stationary(10.0, 2.0, 10).unwrap().mean), "5.04");
        assert_eq!(format!("{:.2}", mmc_stationary(30.0, 2.0, 30).unwrap().mean), "15.00");
    }

    #[test]
    fn rejects_unstable() {
        assert!(matches!(mmc_stationary(10.0, 1.0, 10), Err(Error::Unstable { .. })));
        assert!(mmc_stationary(-1.0, 1.0, 10).is_err());
    }

    #[test]
    fn proportional_counts_give_zero_statistic() {
        let pmf = StationaryPmf::from_probabilities(vec![0.25, 0.25, 0.5]).unwrap();
        let r = chi_squared_gof(&[25, 25, 50], &pmf).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.df, 2);
    }

    #[test]
    fn pooling_keeps_expected_at_least_five() {
        let pmf = mmc_stationary(10.0, 2.0, 10).unwrap();
        let obs: Vec<u64> = (0..20).map(|k| (pmf.get(k) * 1000.0).round() as u64).collect();
        let r = chi_squared_gof(&obs, &pmf).unwrap();
        assert!(r.bins.iter().all(|b| b.expected >= MIN_EXPECTED));
        assert!(r.bins.last().unwrap().high.is_none());
        let expected: f64 = r.bins.iter().map(|b| b.expected).sum();
        assert!((expected - r.n as f64).abs() < 1e-6);
        assert_eq!(r.bins.iter().map(|b| b.observed).sum::<u64>(), r.n);
        assert!(r.p_value > 0.5);
    }

    #[test]
    fn too_few_bins_is_an_error() {
        let pmf = mmc_stationary(10.0, 2.0, 10).unwrap();
        assert!(matches!(chi_squared_gof(&[0, 0, 0, 3], &pmf), Err(Error::InsufficientData(_))));
        assert!(matches!(chi_squared_gof(&[], &pmf), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn detects_wrong_distribution() {
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        use rand_distr::{Distribution, Geometric};
        // Geometric shifted up by one against the M/M/1 law it would otherwise match.
        let pmf = mmc_stationary(1.0, 2.0, 1).unwrap();
        let g = Geometric::new(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = histogram((0..100_000).map(|_| g.sample(&mut rng) as usize + 1));
        let r = chi_squared_gof(&obs, &pmf).unwrap();
        assert!(r.p_value < 1e-6, "{}", r.p_value);
        let obs = histogram((0..100_000).map(|_| g.sample(&mut rng) as usize));
        assert!(chi_squared_gof(&obs, &pmf).unwrap().p_value > 1e-3);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // Reference quantiles of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 1e-3);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn ks_detects_shift() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert!(ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)).p_value > 0.99);
        assert!(ks_one_sample(&xs, |x| (x * x).clamp(0.0, 1.0)).p_value < 1e-6);
        let ys: Vec<f64> = xs.iter().map(|x| x + 0.2).collect();
        assert!(ks_two_sample(&xs, &xs).statistic == 0.0);
        assert!(ks_two_sample(&xs, &ys).p_value < 1e-6);
    }

    #[test]
    fn ks_two_sample_handles_atoms() {
        let a = vec![0.0, 0.0, 0.0, 1.0];
        let b = vec![0.0, 0.0, 0.0, 1.0];
        assert_eq!(ks_two_sample(&a, &b).statistic, 0.0);
        let c = vec![0.0, 1.0, 1.0, 1.0];
        assert!((ks_two_sample(&a, &c).statistic - 0.5).abs() < 1e-15);
    }

    /// `printed` at its own precision: half a unit in the last digit shown.
    fn agrees(value: f64, printed: f64, half_unit: f64) -> bool {
        (value - printed).abs() <= half_unit
    }

    #[test]
    fn lower_bound_table() {
        let cells = [
            (10.0, 10, 5.0, 102.0, 0.5),
            (20.0, 20, 10.0, 52429.0, 0.5),
            (30.0, 30, 15.0, 3.58e7, 0.005e7),
            (40.0, 40, 20.0, 2.75e10, 0.005e10),
            (50.0, 50, 25.0, 2.25e13, 0.005e13),
            (30.0, 30, 5.0, 7.85, 0.005),
            (30.0, 30, 10.0, 6392.0, 0.5),
            (30.0, 30, 20.0, 6.86e12, 0.005e12),
            (30.0, 30, 25.0, 7.37e21, 0.005e21),
            (30.0, 30, 29.5, 7.37e51, 0.005e51),
        ];
        for (lambda, c, rho, printed, half) in cells {
            let v = alg1_runtime_lower_bound(lambda, c, rho);
            assert!(agrees(v, printed, half), "{lambda},{c},{rho}: {v} vs {printed}");
        }
        assert_eq!(alg1_runtime_lower_bound(10.0, 10, 0.0), 0.0);
    }

    #[test]
    fn heuristic_table() {
        let cells = [
            (10.0, 10, 5.0, 5.04),
            (20.0, 20, 10.0, 10.00),
            (30.0, 30, 15.0, 15.00),
            (40.0, 40, 20.0, 20.00),
            (50.0, 50, 25.0, 25.00),
            (30.0, 30, 5.0, 1.00),
            (30.0, 30, 10.0, 5.00),
            (30.0, 30, 20.0, 40.10),
            (30.0, 30, 25.0, 131.25),
            (30.0, 30, 29.5, 4853.97),
        ];
        for (lambda, c, rho, printed) in cells {
            let v = alg2_runtime_heuristic_mmc(lambda, c, rho).unwrap();
            assert!(agrees(v, printed, 0.005), "{lambda},{c},{rho}: {v} vs {printed}");
        }
        assert_eq!(alg2_runtime_heuristic(10.0, 10, 5.0, 5.04), 5.04);
        assert!(alg2_runtime_heuristic(10.0, 10, 10.0 - 1e-12, 5.0) > 1e10);
    }
}
