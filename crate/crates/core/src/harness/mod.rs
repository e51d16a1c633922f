//! Scenario runner, balance auditor and gas reporter.

pub mod audit;
pub mod report;
pub mod runner;
pub mod scenario;

pub use audit::{reconstruct_all, reconstruct_balances, restore_grants, AuditError, AuditSnapshot};
pub use report::{gas_report, AssertionResult, GasRow, GasTable, RunReport, TxOutcome, TxRecord};
pub use runner::{run, RunConfig, RunError, Runner};
pub use scenario::{Scenario, ScenarioError};
