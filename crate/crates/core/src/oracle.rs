//! Full-information quantities that only an evaluator holding both potential
//! outcomes can compute.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::design::{step_size, RunLog};
use crate::error::{Error, Result};
use crate::numerics::{dot, min_eigenvalue, norm, Cholesky, DenseMatrix, SymmetricMatrix};
use crate::sequences::PotentialOutcomeSequence;

/// Smallest admissible `σ_min(XᵀX / T)` for an OLS fit.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub beta: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `((1/T) Σ r_t²)^{1/2}`
    pub rms: f64,
}

/// Checks `T > d` and `σ_min(XᵀX/T) ≥ 1e-10`, returning the factor of `XᵀX`.
pub(crate) fn factor_design(x: &DenseMatrix) -> Result<(SymmetricMatrix, Cholesky)> {
    let (t_len, d) = (x.rows(), x.cols());
    if t_len <= d {
        return Err(Error::RankDeficient { sigma_min: 0.0 });
    }
    let gram = x.gram_prefix(t_len);
    let mut scaled = gram.clone();
    scaled.scale(1.0 / t_len as f64);
    let sigma_min = min_eigenvalue(&scaled);
    if sigma_min < RANK_TOLERANCE {
        return Err(Error::RankDeficient { sigma_min });
    }
    let chol = Cholesky::factor(&gram).map_err(|_| Error::RankDeficient { sigma_min })?;
    Ok((gram, chol))
}

pub fn ols_fit(x: &DenseMatrix, y: &[f64]) -> Result<OlsFit> {
    if y.len() != x.rows() {
        return Err(Error::LengthMismatch { what: "outcomes", expected: x.rows(), got: y.len() });
    }
    let (_, chol) = factor_design(x)?;
    let beta = chol.solve(&x.t_mul_vec(y));
    Ok(fit_from_beta(x, y, beta))
}

fn fit_from_beta(x: &DenseMatrix, y: &[f64], beta: Vec<f64>) -> OlsFit {
    let residuals: Vec<f64> = x.iter_rows().zip(y).map(|(row, yt)| yt - dot(row, &beta)).collect();
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / y.len() as f64).sqrt();
    OlsFit { beta, residuals, rms }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub horizon: usize,
    pub e1: f64,
    pub e0: f64,
    pub rho: f64,
    pub beta_ols_1: Vec<f64>,
    pub beta_ols_0: Vec<f64>,
    pub p_star: f64,
    /// `T · V* = 2(1 + ρ) E(1) E(0)`
    pub v_star_t: f64,
    /// `T · VB = 4 E(1) E(0)`
    pub vb_t: f64,
    pub tau: f64,
    pub residuals1: Vec<f64>,
    pub residuals0: Vec<f64>,
}

pub fn summarize(seq: &PotentialOutcomeSequence) -> Result<OracleSummary> {
    let (_, chol) = factor_design(&seq.x)?;
    let f1 = fit_from_beta(&seq.x, &seq.y1, chol.solve(&seq.x.t_mul_vec(&seq.y1)));
    let f0 = fit_from_beta(&seq.x, &seq.y0, chol.solve(&seq.x.t_mul_vec(&seq.y0)));
    for (arm, f) in [(1u8, &f1), (0u8, &f0)] {
        if f.rms < 1e-12 {
            return Err(Error::DegenerateResiduals { arm, e: f.rms });
        }
    }
    let t = seq.len() as f64;
    let cross = f1.residuals.iter().zip(&f0.residuals).map(|(a, b)| a * b).sum::<f64>() / t;
    let (e1, e0) = (f1.rms, f0.rms);
    let rho = cross / (e1 * e0);
    Ok(OracleSummary {
        horizon: seq.len(),
        e1,
        e0,
        rho,
        p_star: 1.0 / (1.0 + e0 / e1),
        v_star_t: 2.0 * (1.0 + rho) * e1 * e0,
        vb_t: 4.0 * e1 * e0,
        tau: seq.tau(),
        beta_ols_1: f1.beta,
        beta_ols_0: f0.beta,
        residuals1: f1.residuals,
        residuals0: f0.residuals,
    })
}

impl OracleSummary {
    /// `T · V*` recomputed as `(1/T) Σ_t ℓ_t(β_OLS)`.
    pub fn mean_comparator_loss(&self) -> f64 {
        let a = (self.e0 / self.e1).sqrt();
        let s: f64 = self.residuals1.iter().zip(&self.residuals0).map(|(r1, r0)| prediction_loss(*r1, *r0, a)).sum();
        s / self.horizon as f64
    }

    pub fn labeled_rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("T", self.horizon as f64),
            ("e1", self.e1),
            ("e0", self.e0),
            ("rho", self.rho),
            ("p_star", self.p_star),
            ("v_star_T", self.v_star_t),
            ("vb_T", self.vb_t),
            ("tau", self.tau),
        ]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_labeled(out, &self.labeled_rows())
    }
}

pub(crate) fn write_labeled<W: Write>(mut out: W, rows: &[(&str, f64)]) -> Result<()> {
    writeln!(out, "quantity,value")?;
    for (k, v) in rows {
        writeln!(out, "{k},{v}")?;
    }
    Ok(())
}

/// `g_t` for residuals `(r1, r0)` at probability `p`.
#[inline]
pub fn conditional_variance_term(r1: f64, r0: f64, p: f64) -> f64 {
    let v = r1 * ((1.0 - p) / p).sqrt() + r0 * (p / (1.0 - p)).sqrt();
    v * v
}

/// `f_t(p) = r1²/p + r0²/(1−p)`
#[inline]
pub fn probability_loss(r1: f64, r0: f64, p: f64) -> f64 {
    r1 * r1 / p + r0 * r0 / (1.0 - p)
}

/// `ℓ_t = (r1 a + r0 / a)²` with `a = √(E0/E1)`.
#[inline]
pub fn prediction_loss(r1: f64, r0: f64, a: f64) -> f64 {
    let v = r1 * a + r0 / a;
    v * v
}

fn check_log(log: &RunLog, seq: &PotentialOutcomeSequence) -> Result<()> {
    if log.steps.len() != seq.len() {
        return Err(Error::LengthMismatch { what: "run log", expected: seq.len(), got: log.steps.len() });
    }
    Ok(())
}

/// `Σ_t g_t` with residuals of the realized predictions.
///
/// Its expectation over assignments is `T² Var(τ̂)`, so `g_sum / T` averages
/// to `T · Var(τ̂)`.
pub fn realized_variance_sum(log: &RunLog, seq: &PotentialOutcomeSequence) -> Result<f64> {
    check_log(log, seq)?;
    Ok(log
        .steps
        .iter()
        .enumerate()
        .map(|(i, s)| conditional_variance_term(seq.y1[i] - s.pred1, seq.y0[i] - s.pred0, s.p))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretBreakdown {
    pub g_sum: f64,
    pub r_prob: f64,
    pub r_pred: f64,
    /// `g_sum / T − T · V*`
    pub neyman_regret_realized: f64,
    /// `g_sum − r_prob − r_pred − T · (T · V*)`, zero up to rounding.
    pub reconciliation: f64,
}

impl RegretBreakdown {
    pub fn relative_reconciliation(&self) -> f64 {
        self.reconciliation.abs() / self.g_sum.abs().max(f64::MIN_POSITIVE)
    }

    pub fn labeled_rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("g_sum", self.g_sum),
            ("r_prob", self.r_prob),
            ("r_pred", self.r_pred),
            ("neyman_regret", self.neyman_regret_realized),
            ("reconciliation", self.reconciliation),
        ]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_labeled(out, &self.labeled_rows())
    }
}

/// Splits the realized variance sum into probability and prediction regret.
///
/// Both `f_t(p_t)` and the comparator `f_t(p*)` use residuals of the realized
/// predictors; `ℓ_t` is compared against the OLS fit. With these choices
/// `g_sum = r_prob + r_pred + T·(T·V*)` holds on every path.
pub fn regret_components(
    log: &RunLog,
    seq: &PotentialOutcomeSequence,
    summary: &OracleSummary,
) -> Result<RegretBreakdown> {
    check_log(log, seq)?;
    let a = (summary.e0 / summary.e1).sqrt();
    let p_star = summary.p_star;
    let (mut g_sum, mut f_play, mut f_star, mut l_play, mut l_ols) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, s) in log.steps.iter().enumerate() {
        let r1 = seq.y1[i] - s.pred1;
        let r0 = seq.y0[i] - s.pred0;
        g_sum += conditional_variance_term(r1, r0, s.p);
        f_play += probability_loss(r1, r0, s.p);
        f_star += probability_loss(r1, r0, p_star);
        l_play += prediction_loss(r1, r0, a);
        l_ols += prediction_loss(summary.residuals1[i], summary.residuals0[i], a);
    }
    let t = seq.len() as f64;
    let r_prob = f_play - f_star;
    let r_pred = l_play - l_ols;
    Ok(RegretBreakdown {
        g_sum,
        r_prob,
        r_pred,
        neyman_regret_realized: g_sum / t - summary.v_star_t,
        reconciliation: g_sum - r_prob - r_pred - t * summary.v_star_t,
    })
}

/// `R_t` for `t = 1..T`, starting from `R_0 = 1`.
pub fn radius_schedule(x: &DenseMatrix) -> Vec<f64> {
    let mut r = 1.0f64;
    x.iter_rows()
        .map(|row| {
            r = r.max(norm(row));
            r
        })
        .collect()
}

/// Ridge predictors fit on the true outcomes of one arm:
/// `β*_t(k) = (X_{t−1}ᵀX_{t−1} + η_t⁻¹I)⁻¹ Σ_{s<t} x_s y_s(k)`.
pub fn full_info_predictors(seq: &PotentialOutcomeSequence, arm: bool) -> Result<Vec<Vec<f64>>> {
    let y = if arm { &seq.y1 } else { &seq.y0 };
    let d = seq.dim();
    let radii = radius_schedule(&seq.x);
    let mut gram = SymmetricMatrix::zeros(d);
    let mut cross = vec![0.0; d];
    let mut out = Vec::with_capacity(seq.len());
    for i in 0..seq.len() {
        let mut ridge = gram.clone();
        ridge.add_diag(1.0 / step_size(seq.len(), radii[i]));
        out.push(Cholesky::factor(&ridge)?.solve(&cross));
        let x = seq.x.row(i);
        gram.add_outer(x, 1.0);
        for (c, xi) in cross.iter_mut().zip(x) {
            *c += xi * y[i];
        }
    }
    Ok(out)
}

/// `Π_{t,s} = x_tᵀ(X_{t−1}ᵀX_{t−1} + η_t⁻¹I)⁻¹x_s` for `1 ≤ s ≤ t ≤ T`.
pub fn leverage(seq: &PotentialOutcomeSequence, t: usize, s: usize) -> Result<f64> {
    if !(1 <= s && s <= t && t <= seq.len()) {
        return Err(Error::InvalidConfig(format!(
            "leverage needs 1 <= s <= t <= T, got s = {s}, t = {t}, T = {}",
            seq.len()
        )));
    }
    let radius = radius_schedule(&seq.x)[t - 1];
    let mut ridge = seq.x.gram_prefix(t - 1);
    ridge.add_diag(1.0 / step_size(seq.len(), radius));
    let chol = Cholesky::factor(&ridge)?;
    Ok(dot(seq.x.row(t - 1), &chol.solve(seq.x.row(s - 1))))
}

/// Row `t − 1` holds `Π_{t,1}, …, Π_{t,t}`.
pub fn leverage_table(seq: &PotentialOutcomeSequence) -> Result<Vec<Vec<f64>>> {
    let d = seq.dim();
    let radii = radius_schedule(&seq.x);
    let mut gram = SymmetricMatrix::zeros(d);
    let mut table = Vec::with_capacity(seq.len());
    for t in 0..seq.len() {
        let mut ridge = gram.clone();
        ridge.add_diag(1.0 / step_size(seq.len(), radii[t]));
        let chol = Cholesky::factor(&ridge)?;
        let h = chol.solve(seq.x.row(t));
        table.push((0..=t).map(|s| dot(&h, seq.x.row(s))).collect());
        gram.add_outer(seq.x.row(t), 1.0);
    }
    Ok(table)
}

/// Closed-form `E[Â_t(k)]` for `t = 1..T`:
/// `A*_t(k) + Σ_{s≤t} Σ_{r<s} Π²_{s,r} y_r(k)² (E[1/w_r] − 1)`,
/// where `A*_t(k) = Σ_{s≤t} (y_s(k) − ⟨x_s, β*_s(k)⟩)²` and `inv_w_means[r]`
/// supplies `E[1/p_r]` (treated) or `E[1/(1 − p_r)]` (control).
pub fn expected_estores(seq: &PotentialOutcomeSequence, inv_w_means: &[f64], arm: bool) -> Result<Vec<f64>> {
    if inv_w_means.len() != seq.len() {
        return Err(Error::LengthMismatch {
            what: "inverse-weight means",
            expected: seq.len(),
            got: inv_w_means.len(),
        });
    }
    let y = if arm { &seq.y1 } else { &seq.y0 };
    let betas = full_info_predictors(seq, arm)?;
    let table = leverage_table(seq)?;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(seq.len());
    for s in 0..seq.len() {
        let r = y[s] - dot(seq.x.row(s), &betas[s]);
        acc += r * r;
        for q in 0..s {
            let pi = table[s][q];
            acc += pi * pi * y[q] * y[q] * (inv_w_means[q] - 1.0);
        }
        out.push(acc);
    }
    Ok(out)
}
