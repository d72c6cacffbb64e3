//! Perfect (exact) sampling of the stationary Kiefer-Wolfowitz workload
//! vector of a stable M/G/c FCFS queue by dominated coupling from the past.
//!
//! The dominating process is a system of `c` independent M/G/1 queues under
//! processor sharing, simulated backwards in time from equilibrium. Its time
//! reversal is a random-assignment system that feeds arrival times and
//! service durations to the FCFS target, with durations paired to
//! initiations of service.
//!
//! Two samplers are provided:
//!
//! * [`cftp::algorithm1`] runs the dominating process back until every server
//!   is simultaneously empty and replays the target forward from empty.
//! * [`cftp::algorithm2`] brackets the target between upper and lower
//!   envelope processes started at `-T̂` and doubles `T̂` until their workload
//!   vectors agree at time zero.
//!
//! [`analysis`] holds the M/M/c closed form, goodness-of-fit tests and the
//! run-time bound formulas used to validate both samplers.

pub mod analysis;
pub mod cftp;
pub mod dist;
pub mod dominate;
pub mod error;
pub mod forward;
pub mod invariants;
pub mod kw;
pub mod rng;

pub use cftp::{algorithm1, algorithm2, Algorithm, Backoff, EquilibriumSample, SamplerConfig};
pub use dist::{QueueParams, ServiceDistribution};
pub use error::{Error, Result};
pub use kw::WorkloadVector;
