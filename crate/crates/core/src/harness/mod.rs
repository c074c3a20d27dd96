//! Deterministic Monte Carlo runner, sweep output and the command line.

pub mod cli;
pub mod config;
pub mod output;
pub mod rng;
pub mod sweep;

pub use config::{ConfigError, InputSpec, OutputFormat, RawConfig, SideAxis, SweepConfig};
pub use rng::RngStream;
pub use sweep::{estimate_mean, estimate_rate, run_sweep, Estimate, GridPoint, ResultRow};
