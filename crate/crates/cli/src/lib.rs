//! Scenario files, the scenario runner and the report writer behind the `sundman`
//! command-line tool.

pub mod builtins;
pub mod expr;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod suite;

pub use runner::{run, CheckOutcome, InvalidInput, Outcome};
pub use scenario::{parse_scenario, Kind, Scenario, ScenarioError};
