//! Adaptive Neyman allocation by sigmoid-regularized follow-the-regularized-
//! leader, with AIPW estimation, variance-bound inference and full-information
//! regret accounting.
//!
//! A typical experiment:
//!
//! ```
//! use neyman_core::{design, estimator, oracle, sequences, DesignConfig, RngStream, SigmoidSpec};
//!
//! let mut rng = RngStream::new(42, 0);
//! let params = sequences::StationaryParams::new(200, 2);
//! let seq = sequences::gen_stationary(&params, &mut rng).unwrap();
//!
//! let config = DesignConfig::new(200, 2, SigmoidSpec::arctan()).unwrap();
//! let log = design::run(&config, &seq, &mut rng).unwrap();
//!
//! let ci = estimator::infer(&log, &seq.x, 0.05).unwrap();
//! let summary = oracle::summarize(&seq).unwrap();
//! let regret = oracle::regret_components(&log, &seq, &summary).unwrap();
//! assert!(ci.ci_low <= ci.tau_hat && ci.tau_hat <= ci.ci_high);
//! assert!(regret.relative_reconciliation() < 1e-8);
//! ```

pub mod baselines;
pub mod design;
pub mod error;
pub mod estimator;
pub mod numerics;
pub mod oracle;
pub mod sequences;
pub mod sigmoid;

pub use baselines::{run_baseline, BaselineKind};
pub use design::{Assignment, DesignConfig, DesignState, RunLog, StepRecord};
pub use error::{Error, Result};
pub use estimator::InferenceResult;
pub use numerics::{DenseMatrix, RngStream, SymmetricMatrix};
pub use oracle::{OracleSummary, RegretBreakdown};
pub use sequences::{AssumptionReport, PotentialOutcomeSequence, StationaryParams};
pub use sigmoid::{Clause, ConditionReport, SigmoidKind, SigmoidSpec};
