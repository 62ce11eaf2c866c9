//! Experiment harness for the adaptive Neyman allocation library: Monte Carlo
//! simulation, regret sweeps, interval coverage, sigmoid verification,
//! sequence diagnostics and the exact-identity suite.
//!
//! Every command is a pure function of an [`ExperimentConfig`]; replication
//! `j` uses the random stream `(seed, j)` and results are collected in
//! replication order, so output bytes do not depend on the worker count.

pub mod commands;
pub mod config;
pub mod error;
pub mod sim;
pub mod table;

pub use commands::{execute, run_command};
pub use config::{Command, DesignKind, ExperimentConfig, Overrides, SequenceSpec};
pub use error::{HarnessError, Result};
pub use table::{Cell, Table};
