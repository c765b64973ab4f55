//! Mixed-autonomy traffic control on a ring road.
//!
//! Human-driven vehicles follow LWR dynamics; a budgeted share of vehicles is
//! steered to push the total density toward uniform.

pub mod config;
pub mod conic;
pub mod cost;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod godunov;
pub mod lax_friedrichs;
pub mod optimizer;
pub mod output;
pub mod presets;

pub use config::{parse_config, ExperimentConfig};
pub use error::{Error, Result};
pub use experiment::{run_experiment, RunOutput, RunSummary};
