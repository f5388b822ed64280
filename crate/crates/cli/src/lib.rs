//! Experiment harness for `rsvrg`: step-size grids over the optimizer
//! variants, CSV traces and summaries, plot-ready long-format tables, and
//! post-hoc verification of artifact directories.

pub mod check;
pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;

pub use check::{verify_artifacts, VerifyReport};
pub use config::{Cell, ExperimentConfig};
pub use error::{CliError, Result};
pub use experiment::{run_experiment, ExperimentReport};
pub use plot::emit_plot_data;
