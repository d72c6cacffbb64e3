//! Command-line front end for the `mgc-cftp` samplers.
//!
//! `sample` writes one row per replication, `validate` compares sampled
//! customer counts with the M/M/c stationary law, and `bench` summarises
//! run-times against the analytic bounds. Replications run in parallel and
//! are merged in replication order, so output does not depend on the
//! thread count.

pub mod commands;
pub mod config;
pub mod error;
pub mod replicate;

pub use commands::execute;
pub use config::{Cli, Command, CommandKind, Format, RunConfig};
pub use error::{CliError, Result};
