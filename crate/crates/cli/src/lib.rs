//! Configuration, orchestration and persistence for Dicke-model runs.
//!
//! Each coupling is written to `<out>/<gamma>/<sector>/` with one file per
//! plotted quantity and a manifest carrying content hashes, residual
//! reports, converged counts and wall times.

pub mod args;
pub mod config;
pub mod convergence;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod sweep;

pub use config::{Analyses, RunConfig, SectorChoice, Settings};
pub use error::{CliError, CliResult};
pub use pipeline::{run, run_point, PointResult, SectorResult};
pub use sweep::{sweep, SweepOutcome};
