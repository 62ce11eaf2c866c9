//! Post-run inference: the AIPW point estimate, the variance-bound estimator
//! and Wald intervals.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::design::RunLog;
use crate::error::{Error, Result};
use crate::numerics::{dot, DenseMatrix};
use crate::oracle::factor_design;

fn check_rows(log: &RunLog, covariates: &DenseMatrix) -> Result<()> {
    if covariates.rows() != log.steps.len() {
        return Err(Error::LengthMismatch { what: "covariates", expected: log.steps.len(), got: covariates.rows() });
    }
    Ok(())
}

/// `τ̂ = (1/T) Σ_t [pred1 − pred0 + 1[z=1](y − pred1)/p − 1[z=0](y − pred0)/(1−p)]`
pub fn aipw_estimate(log: &RunLog, covariates: &DenseMatrix) -> Result<f64> {
    check_rows(log, covariates)?;
    if log.steps.is_empty() {
        return Err(Error::LengthMismatch { what: "run log", expected: 1, got: 0 });
    }
    let s: f64 = log
        .steps
        .iter()
        .map(|s| {
            let correction = if s.z { (s.y_obs - s.pred1) / s.p } else { -(s.y_obs - s.pred0) / (1.0 - s.p) };
            s.pred1 - s.pred0 + correction
        })
        .sum();
    Ok(s / log.steps.len() as f64)
}

/// Unbiased estimates `(Ê²(1), Ê²(0))` of the squared OLS residual norms.
///
/// The pairwise IPW sum over `Q = I − X(XᵀX)⁻¹Xᵀ` is rewritten as
/// `vᵀQv − Σ_t Q_tt v_t² (1 − w_t)` with `v` the IPW pseudo-outcomes, which
/// costs `O(T d² + d³)` and never forms `Q`. Either value may be negative.
pub fn variance_bound_estimate(log: &RunLog, covariates: &DenseMatrix) -> Result<(f64, f64)> {
    check_rows(log, covariates)?;
    let (_, chol) = factor_design(covariates)?;
    let t_len = log.steps.len();
    let q_diag: Vec<f64> = covariates.iter_rows().map(|x| 1.0 - chol.inv_quad(x)).collect();
    let mut out = [0.0; 2];
    for (slot, arm) in [(0usize, true), (1, false)] {
        let mut v = vec![0.0; t_len];
        let mut correction = 0.0;
        for (i, s) in log.steps.iter().enumerate() {
            if s.z == arm {
                let w = s.weight();
                v[i] = s.y_obs / w;
                correction += q_diag[i] * v[i] * v[i] * (1.0 - w);
            }
        }
        let xtv = covariates.t_mul_vec(&v);
        let quad = dot(&v, &v) - chol.inv_quad(&xtv);
        out[slot] = (quad - correction) / t_len as f64;
    }
    Ok((out[0], out[1]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    pub tau_hat: f64,
    pub e2_hat_1: f64,
    pub e2_hat_0: f64,
    /// Estimated variance bound `4 Ê(1) Ê(0) / T`.
    pub vb_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub alpha: f64,
}

pub const INFERENCE_HEADER: [&str; 7] = ["tau_hat", "e2_1", "e2_0", "vb_hat", "ci_low", "ci_high", "alpha"];

impl InferenceResult {
    pub fn covers(&self, tau: f64) -> bool {
        self.ci_low <= tau && tau <= self.ci_high
    }

    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", INFERENCE_HEADER.join(","))?;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            self.tau_hat, self.e2_hat_1, self.e2_hat_0, self.vb_hat, self.ci_low, self.ci_high, self.alpha
        )?;
        Ok(())
    }
}

/// `τ̂ ± Φ⁻¹(1 − α/2) √VB̂` with `VB̂ = 4 max(Ê²(1),0)^{1/2} max(Ê²(0),0)^{1/2} / T`.
pub fn wald_ci(tau_hat: f64, e2_1: f64, e2_0: f64, horizon: usize, alpha: f64) -> Result<InferenceResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if horizon == 0 {
        return Err(Error::InvalidConfig("horizon must be positive".into()));
    }
    let vb_hat = 4.0 * e2_1.max(0.0).sqrt() * e2_0.max(0.0).sqrt() / horizon as f64;
    let half = normal_quantile(1.0 - alpha / 2.0) * vb_hat.sqrt();
    Ok(InferenceResult {
        tau_hat,
        e2_hat_1: e2_1,
        e2_hat_0: e2_0,
        vb_hat,
        ci_low: tau_hat - half,
        ci_high: tau_hat + half,
        alpha,
    })
}

/// Point estimate, variance bound and interval in one call.
pub fn infer(log: &RunLog, covariates: &DenseMatrix, alpha: f64) -> Result<InferenceResult> {
    let tau_hat = aipw_estimate(log, covariates)?;
    let (e1, e0) = variance_bound_estimate(log, covariates)?;
    wald_ci(tau_hat, e1, e0, log.steps.len(), alpha)
}

/// Standard normal quantile `Φ⁻¹(p)`.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by
/// one Halley step on `Φ(x) = erfc(−x/√2)/2`, which brings the error down to
/// a few ulps over the whole open interval.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || p <= 0.0 || p >= 1.0 {
        return match p {
            0.0 => f64::NEG_INFINITY,
            1.0 => f64::INFINITY,
            _ => f64::NAN,
        };
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383_577_518_672_69e2,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Work in the tail nearer to p so the residual keeps its precision.
    let e = if p < 0.5 {
        0.5 * libm::erfc(-x / std::f64::consts::SQRT_2) - p
    } else {
        (1.0 - p) - 0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
    };
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}
