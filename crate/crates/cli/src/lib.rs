//! Reproducible experiment runs for meta-sampler ensembles: configuration,
//! per-seed experiment bodies and CSV/JSON result writers behind the `mesa`
//! binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

pub use commands::{run_command, Command};
pub use config::{RunConfig, SplitFractions, ToyTask, TrainMode};
pub use error::{CliError, Result};
pub use experiments::TaskSource;
