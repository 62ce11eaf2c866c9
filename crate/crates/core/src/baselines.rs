//! Non-adaptive comparators sharing the design's [`RunLog`] format.

use crate::design::{RunLog, StepRecord};
use crate::error::{Error, Result};
use crate::numerics::{dot, RngStream};
use crate::oracle::OracleSummary;
use crate::sequences::PotentialOutcomeSequence;

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineKind {
    /// `p_t = ½` and zero predictions (Horvitz-Thompson).
    BernoulliHalf,
    /// `p_t = p*` with OLS predictions. Needs both potential outcomes, so it
    /// is an evaluation device only.
    OracleNeyman(OracleSummary),
}

/// Runs a fixed design, drawing one uniform per subject like the adaptive
/// design does. `eta` and `r` are recorded as 0 since no step size exists.
pub fn run_baseline(kind: &BaselineKind, seq: &PotentialOutcomeSequence, rng: &mut RngStream) -> Result<RunLog> {
    if let BaselineKind::OracleNeyman(summary) = kind {
        if summary.horizon != seq.len() || summary.beta_ols_1.len() != seq.dim() {
            return Err(Error::DimensionMismatch { expected: seq.len(), got: summary.horizon });
        }
    }
    let mut steps = Vec::with_capacity(seq.len());
    let (mut ahat1, mut ahat0) = (0.0, 0.0);
    for i in 0..seq.len() {
        let x = seq.x.row(i);
        let (p, pred1, pred0) = match kind {
            BaselineKind::BernoulliHalf => (0.5, 0.0, 0.0),
            BaselineKind::OracleNeyman(s) => (s.p_star, dot(x, &s.beta_ols_1), dot(x, &s.beta_ols_0)),
        };
        let z = rng.uniform() < p;
        let y_obs = if z { seq.y1[i] } else { seq.y0[i] };
        steps.push(StepRecord {
            t: i + 1,
            p,
            z,
            y_obs,
            pred1,
            pred0,
            eta: 0.0,
            r: 0.0,
            ahat1_before: ahat1,
            ahat0_before: ahat0,
        });
        if z {
            ahat1 += (y_obs - pred1).powi(2) / p;
        } else {
            ahat0 += (y_obs - pred0).powi(2) / (1.0 - p);
        }
    }
    Ok(RunLog { dim: seq.dim(), steps, clamp_count: 0, final_ahat: (ahat1, ahat0) })
}
