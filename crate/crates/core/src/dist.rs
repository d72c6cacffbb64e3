//! Service-duration distributions and queue parameters.
//!
//! Each kind carries an exact sampler for the duration `S ~ G`, for the
//! equilibrium (stationary residual-life) law `G_e` and for the
//! length-biased spread law `G_s`. A spread draw `H` split as `(H, U·H)` with
//! `U ~ Uniform[0, 1]` gives a total duration together with a residual that
//! is marginally `G_e`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ServiceDistribution {
    Exponential { rate: f64 },
    Uniform { low: f64, high: f64 },
    Deterministic { value: f64 },
    Erlang { shape: u32, rate: f64 },
}

impl ServiceDistribution {
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::Exponential { rate }.validated()
    }

    pub fn uniform(low: f64, high: f64) -> Result<Self> {
        Self::Uniform { low, high }.validated()
    }

    pub fn deterministic(value: f64) -> Result<Self> {
        Self::Deterministic { value }.validated()
    }

    pub fn erlang(shape: u32, rate: f64) -> Result<Self> {
        Self::Erlang { shape, rate }.validated()
    }

    fn validated(self) -> Result<Self> {
        let ok = match self {
            Self::Exponential { rate } => rate.is_finite() && rate > 0.0,
            Self::Uniform { low, high } => {
                low.is_finite() && high.is_finite() && low >= 0.0 && high > low
            }
            Self::Deterministic { value } => value.is_finite() && value > 0.0,
            Self::Erlang { shape, rate } => shape >= 1 && rate.is_finite() && rate > 0.0,
        };
        if ok {
            Ok(self)
        } else {
            Err(Error::InvalidParameter(format!("service distribution {self}")))
        }
    }

    /// `E[S]`.
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Uniform { low, high } => 0.5 * (low + high),
            Self::Deterministic { value } => value,
            Self::Erlang { shape, rate } => f64::from(shape) / rate,
        }
    }

    /// `E[S²]`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 2.0 / (rate * rate),
            Self::Uniform { low, high } => (low * low + low * high + high * high) / 3.0,
            Self::Deterministic { value } => value * value,
            Self::Erlang { shape, rate } => {
                let k = f64::from(shape);
                k * (k + 1.0) / (rate * rate)
            }
        }
    }

    /// Mean of the equilibrium law, `E[S²] / (2 E[S])`.
    pub fn equilibrium_mean(&self) -> f64 {
        self.second_moment() / (2.0 * self.mean())
    }

    /// Mean of the spread law, `E[S²] / E[S]`.
    pub fn spread_mean(&self) -> f64 {
        self.second_moment() / self.mean()
    }

    pub fn is_exponential(&self) -> bool {
        matches!(self, Self::Exponential { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { rate } => exp(rate).sample(rng),
            Self::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            Self::Deterministic { value } => value,
            Self::Erlang { shape, rate } => gamma(f64::from(shape), rate).sample(rng),
        }
    }

    /// Draw from `G_e(x) = μ ∫₀ˣ Ḡ(y) dy`.
    pub fn sample_equilibrium<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            // Memoryless: the residual life is again exponential.
            Self::Exponential { rate } => exp(rate).sample(rng),
            Self::Deterministic { value } => value * rng.random::<f64>(),
            _ => self.sample_spread_pair(rng).1,
        }
    }

    /// Draw from the length-biased law with density `x g(x) / E[S]`.
    pub fn sample_spread<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { rate } => gamma(2.0, rate).sample(rng),
            Self::Uniform { low, high } => {
                // CDF (x² − a²) / (b² − a²) on [a, b].
                let u: f64 = rng.random();
                (low * low + u * (high * high - low * low)).sqrt()
            }
            Self::Deterministic { value } => value,
            Self::Erlang { shape, rate } => gamma(f64::from(shape) + 1.0, rate).sample(rng),
        }
    }

    /// A spread draw `H` and the residual `U·H`; the spread draw is taken
    /// first so `(total, residual)` consumes the stream in a fixed order.
    pub fn sample_spread_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let total = self.sample_spread(rng);
        let u: f64 = rng.random();
        (total, u * total)
    }
}

fn exp(rate: f64) -> Exp<f64> {
    Exp::new(rate).expect("validated rate")
}

fn gamma(shape: f64, rate: f64) -> Gamma<f64> {
    Gamma::new(shape, 1.0 / rate).expect("validated gamma parameters")
}

impl fmt::Display for ServiceDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Exponential { rate } => write!(f, "exp:{rate}"),
            Self::Uniform { low, high } => write!(f, "unif:{low}:{high}"),
            Self::Deterministic { value } => write!(f, "det:{value}"),
            Self::Erlang { shape, rate } => write!(f, "erlang:{shape}:{rate}"),
        }
    }
}

impl FromStr for ServiceDistribution {
    type Err = Error;

    /// Parses `exp:RATE`, `unif:LOW:HIGH`, `det:VALUE` or `erlang:SHAPE:RATE`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ParseService(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts.get(i).and_then(|p| p.parse::<f64>().ok()).ok_or_else(bad)
        };
        let dist = match (parts[0].to_ascii_lowercase().as_str(), parts.len()) {
            ("exp", 2) => Self::Exponential { rate: num(1)? },
            ("unif", 3) => Self::Uniform { low: num(1)?, high: num(2)? },
            ("det", 2) => Self::Deterministic { value: num(1)? },
            ("erlang", 3) => Self::Erlang {
                shape: parts[1].parse::<u32>().map_err(|_| bad())?,
                rate: num(2)?,
            },
            _ => return Err(bad()),
        };
        dist.validated()
    }
}

/// Arrival rate, number of servers and service law of an M/G/c queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueParams {
    pub lambda: f64,
    pub servers: usize,
    pub service: ServiceDistribution,
}

impl QueueParams {
    /// Rejects non-positive rates, zero servers and `ρ ≥ c`.
    pub fn new(lambda: f64, servers: usize, service: ServiceDistribution) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("lambda = {lambda}")));
        }
        if servers == 0 {
            return Err(Error::InvalidParameter("c must be at least 1".into()));
        }
        let service = service.validated()?;
        let params = Self { lambda, servers, service };
        let rho = params.rho();
        if rho >= servers as f64 {
            return Err(Error::Unstable { rho, servers });
        }
        Ok(params)
    }

    /// Traffic intensity `ρ = λ E[S]`.
    pub fn rho(&self) -> f64 {
        self.lambda * self.service.mean()
    }

    /// Arrival rate seen by each server of the random-assignment system.
    pub fn per_server_rate(&self) -> f64 {
        self.lambda / self.servers as f64
    }

    /// Per-server load `ρ / c`, which is also the probability that a server of
    /// the dominating system is busy in equilibrium.
    pub fn per_server_load(&self) -> f64 {
        self.rho() / self.servers as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::ks_one_sample;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    fn all_kinds() -> Vec<ServiceDistribution> {
        vec![
            ServiceDistribution::exponential(2.0).unwrap(),
            ServiceDistribution::uniform(0.0, 1.0).unwrap(),
            ServiceDistribution::uniform(0.5, 2.0).unwrap(),
            ServiceDistribution::deterministic(0.5).unwrap(),
            ServiceDistribution::erlang(2, 4.0).unwrap(),
        ]
    }

    #[test]
    fn deterministic_is_a_point_mass() {
        let d = ServiceDistribution::deterministic(3.0).unwrap();
        let mut r = rng(1);
        assert_eq!(d.sample(&mut r), 3.0);
        assert_eq!(d.sample_spread(&mut r), 3.0);
    }

    #[test]
    fn uniform_and_exponential_sample_means() {
        let mut r = rng(2);
        let u = ServiceDistribution::uniform(0.0, 1.0).unwrap();
        let xs: Vec<f64> = (0..1_000_000).map(|_| u.sample(&mut r)).collect();
        assert!((mean_and_se(&xs).0 - 0.5).abs() < 0.002);

        let e = ServiceDistribution::exponential(2.0).unwrap();
        let xs: Vec<f64> = (0..1_000_000).map(|_| e.sample(&mut r)).collect();
        assert!((mean_and_se(&xs).0 - 0.5).abs() < 0.002);
    }

    #[test]
    fn law_of_large_numbers_for_every_kind() {
        let mut r = rng(3);
        for d in all_kinds() {
            let xs: Vec<f64> = (0..1_000_000).map(|_| d.sample(&mut r)).collect();
            let (m, se) = mean_and_se(&xs);
            assert!((m - d.mean()).abs() <= 3.0 * se + 1e-12, "{d}: {m} vs {}", d.mean());
        }
    }

    #[test]
    fn spread_and_equilibrium_means() {
        let mut r = rng(4);
        for d in all_kinds() {
            let n = 100_000;
            let s: Vec<f64> = (0..n).map(|_| d.sample(&mut r)).collect();
            let h: Vec<f64> = (0..n).map(|_| d.sample_spread(&mut r)).collect();
            let e: Vec<f64> = (0..n).map(|_| d.sample_equilibrium(&mut r)).collect();
            let (ms, ses) = mean_and_se(&s);
            let (mh, seh) = mean_and_se(&h);
            let (me, see) = mean_and_se(&e);
            assert!(mh + 3.0 * (seh + ses) >= ms, "{d}: spread mean {mh} below {ms}");
            assert!((mh - d.spread_mean()).abs() <= 3.0 * seh + 1e-12, "{d}: {mh}");
            assert!((me - d.equilibrium_mean()).abs() <= 3.0 * see + 1e-12, "{d}: {me}");
        }
    }

    #[test]
    fn uniform_equilibrium_and_spread_pass_ks() {
        let mut r = rng(5);
        let u = ServiceDistribution::uniform(0.0, 1.0).unwrap();
        let e: Vec<f64> = (0..100_000).map(|_| u.sample_equilibrium(&mut r)).collect();
        let ks = ks_one_sample(&e, |x| (2.0 * x - x * x).clamp(0.0, 1.0));
        assert!(ks.p_value > 0.01, "{ks:?}");
        let s: Vec<f64> = (0..100_000).map(|_| u.sample_spread(&mut r)).collect();
        let ks = ks_one_sample(&s, |x| (x * x).clamp(0.0, 1.0));
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn exponential_spread_is_gamma_two() {
        let mut r = rng(6);
        let e = ServiceDistribution::exponential(2.0).unwrap();
        let s: Vec<f64> = (0..100_000).map(|_| e.sample_spread(&mut r)).collect();
        let (m, se) = mean_and_se(&s);
        assert!((m - 1.0).abs() <= 3.0 * se);
        let ks = ks_one_sample(&s, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-2.0 * x).exp() * (1.0 + 2.0 * x) });
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn deterministic_equilibrium_is_uniform() {
        let mut r = rng(7);
        let d = ServiceDistribution::deterministic(0.5).unwrap();
        let e: Vec<f64> = (0..100_000).map(|_| d.sample_equilibrium(&mut r)).collect();
        assert!(e.iter().all(|&x| (0.0..=0.5).contains(&x)));
        let ks = ks_one_sample(&e, |x| (x / 0.5).clamp(0.0, 1.0));
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn spread_pair_residual_never_exceeds_total() {
        let mut r = rng(8);
        for d in all_kinds() {
            for _ in 0..10_000 {
                let (h, res) = d.sample_spread_pair(&mut r);
                assert!(res >= 0.0 && res <= h);
            }
        }
    }

    #[test]
    fn moments_satisfy_jensen() {
        for d in all_kinds() {
            assert!(d.mean() > 0.0);
            assert!(d.second_moment() >= d.mean() * d.mean() - 1e-15);
        }
    }

    #[test]
    fn parse_round_trips_through_display() {
        for spec in ["exp:2", "unif:0:1", "det:0.5", "erlang:2:4"] {
            let d: ServiceDistribution = spec.parse().unwrap();
            let again: ServiceDistribution = d.to_string().parse().unwrap();
            assert_eq!(d, again);
        }
        assert_eq!(
            "exp:2.0".parse::<ServiceDistribution>().unwrap(),
            ServiceDistribution::Exponential { rate: 2.0 }
        );
    }

    #[test]
    fn parse_rejects_garbage() {
        for spec in ["", "exp", "exp:-1", "unif:1:0", "det:0", "erlang:0:1", "erlang:1.5:2", "gamma:1:1"] {
            assert!(spec.parse::<ServiceDistribution>().is_err(), "{spec}");
        }
    }

    #[test]
    fn queue_params_reject_instability() {
        let exp2 = ServiceDistribution::exponential(2.0).unwrap();
        assert!(QueueParams::new(10.0, 10, exp2).is_ok());
        assert!(matches!(QueueParams::new(20.0, 10, exp2), Err(Error::Unstable { .. })));
        assert!(QueueParams::new(0.0, 10, exp2).is_err());
        assert!(QueueParams::new(1.0, 0, exp2).is_err());
        let p = QueueParams::new(10.0, 10, exp2).unwrap();
        assert_eq!(p.rho(), 5.0);
        assert_eq!(p.per_server_rate(), 1.0);
    }
}
