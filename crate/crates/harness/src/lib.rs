//! Scenario files, Monte Carlo experiments and reports on top of
//! `chansearch-core`.

pub mod aggregate;
pub mod experiment;
pub mod report;
pub mod scenario_io;

pub use aggregate::{aggregate, Summary};
pub use experiment::{run_experiment, ExperimentSpec, RunOptions, Suite};
pub use report::report;
pub use scenario_io::{load_scenario, save_scenario};
