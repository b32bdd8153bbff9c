//! Scenario-driven front end: loads a pack scenario, runs the charging
//! protocols and writes CSV traces and summaries.

pub mod analysis;
pub mod error;
pub mod report;
pub mod run;
pub mod scenario;

pub use error::{CliError, CliResult};
pub use scenario::{load_scenario, parse_scenario, Scenario};
