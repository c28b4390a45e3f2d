//! Monte-Carlo harness around the matchsim matching engine.
//!
//! Runs replicated simulation scenarios in parallel, aggregates bias, SD and
//! MSE per design and estimator, emits plot-ready figure data, and applies the
//! matching designs to user datasets.

pub mod config;
pub mod design;
pub mod error;
pub mod figures;
pub mod io;
pub mod prop1;
pub mod runner;
pub mod userdata;

pub use config::HarnessConfig;
pub use design::{Design, Estimator};
pub use error::{HarnessError, Result};
pub use figures::{emit_figure_data, Figure};
pub use runner::{execute, run_config, run_scenario, RunManifest, RunOutput};
pub use userdata::{match_user_data, CemChoice, MatchOptions};
