//! Potential-outcome sequences: generators, CSV I/O and assumption checks.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{is_psd, min_eigenvalue, norm, DenseMatrix, RngStream, SymmetricMatrix};
use crate::oracle::ols_fit;

/// The fixed ground truth `{y_t(1), y_t(0), x_t}` for `t = 1..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomeSequence {
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    pub x: DenseMatrix,
    pub label: String,
}

impl PotentialOutcomeSequence {
    pub fn new(y1: Vec<f64>, y0: Vec<f64>, x: DenseMatrix, label: impl Into<String>) -> Result<Self> {
        if y0.len() != y1.len() {
            return Err(Error::LengthMismatch { what: "y0", expected: y1.len(), got: y0.len() });
        }
        if x.rows() != y1.len() {
            return Err(Error::LengthMismatch { what: "covariate rows", expected: y1.len(), got: x.rows() });
        }
        if y1.is_empty() || x.cols() == 0 {
            return Err(Error::InvalidConfig("sequence needs T >= 1 and d >= 1".into()));
        }
        if !(y1.iter().chain(&y0).chain(x.as_slice()).all(|v| v.is_finite())) {
            return Err(Error::InvalidConfig("sequence contains non-finite entries".into()));
        }
        Ok(Self { y1, y0, x, label: label.into() })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.y1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y1.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Sample average treatment effect.
    pub fn tau(&self) -> f64 {
        let s: f64 = self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).sum();
        s / self.len() as f64
    }

    /// `R = max_t ‖x_t‖` (without the floor at 1 the design applies).
    pub fn max_radius(&self) -> f64 {
        self.x.iter_rows().map(norm).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut header = vec!["t".to_string(), "y1".into(), "y0".into()];
        header.extend((1..=self.dim()).map(|j| format!("x{j}")));
        w.write_record(&header).map_err(io)?;
        for i in 0..self.len() {
            let mut rec = vec![(i + 1).to_string(), self.y1[i].to_string(), self.y0[i].to_string()];
            rec.extend(self.x.row(i).iter().map(f64::to_string));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Reads `t,y1,y0,x1,...,xd`. Rows must be sorted by `t`.
    pub fn read_csv<R: Read>(input: R, label: impl Into<String>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
        let header: Vec<String> =
            rdr.headers().map_err(|e| parse_err(0, "header", e.to_string()))?.iter().map(str::to_string).collect();
        for (k, want) in ["t", "y1", "y0"].iter().enumerate() {
            if header.get(k).map(String::as_str) != Some(*want) {
                return Err(parse_err(0, want, "missing or misplaced column"));
            }
        }
        let d = header.len().saturating_sub(3);
        for j in 1..=d.max(1) {
            let want = format!("x{j}");
            if header.get(2 + j).map(String::as_str) != Some(want.as_str()) {
                return Err(parse_err(0, &want, "missing or misplaced column"));
            }
        }
        let names: Vec<String> = header.clone();

        let (mut y1, mut y0, mut xs) = (Vec::new(), Vec::new(), Vec::new());
        let mut last_t: Option<f64> = None;
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 1;
            let rec = rec.map_err(|e| parse_err(row, "record", e.to_string()))?;
            if rec.len() > names.len() {
                return Err(Error::DimensionMismatch { expected: names.len(), got: rec.len() });
            }
            if rec.len() < names.len() {
                return Err(parse_err(row, &names[rec.len()], "missing value"));
            }
            let field = |k: usize| -> Result<f64> {
                rec[k].parse::<f64>().map_err(|e| parse_err(row, &names[k], format!("`{}`: {e}", &rec[k])))
            };
            let t = field(0)?;
            if last_t.is_some_and(|lt| t <= lt) {
                return Err(parse_err(row, "t", "rows are not sorted by t"));
            }
            last_t = Some(t);
            y1.push(field(1)?);
            y0.push(field(2)?);
            for k in 3..names.len() {
                xs.push(field(k)?);
            }
        }
        let x = DenseMatrix::from_flat(y1.len(), d, xs)?;
        Self::new(y1, y0, x, label)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "file".into());
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), label)
    }
}

fn parse_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::ParseError { row, column: column.to_string(), message: message.into() }
}

/// Parameters of the stationary benchmark family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryParams {
    pub horizon: usize,
    pub dim: usize,
    /// Noise standard deviation of the treated arm.
    pub noise_sd: f64,
    pub effect: f64,
    /// Target correlation of the two arms' residuals, in `[-1, 1]`.
    pub rho_target: f64,
    /// Ratio of treated to control noise scale; 1 makes `p* = ½`.
    pub noise_ratio: f64,
    /// Covariate norms are drawn from `[¾ R_cap, R_cap]`.
    pub r_cap: f64,
}

impl StationaryParams {
    pub fn new(horizon: usize, dim: usize) -> Self {
        Self { horizon, dim, noise_sd: 1.0, effect: 1.0, rho_target: 0.0, noise_ratio: 2.0, r_cap: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.horizon == 0 || self.dim == 0 {
            return bad("stationary family needs T >= 1 and d >= 1");
        }
        if !(-1.0..=1.0).contains(&self.rho_target) {
            return bad("rho_target must lie in [-1, 1]");
        }
        if !(self.noise_sd > 0.0 && self.noise_ratio > 0.0 && self.r_cap > 0.0) {
            return bad("noise_sd, noise_ratio and r_cap must be positive");
        }
        Ok(())
    }
}

/// I.i.d. covariates with a linear signal and correlated Gaussian noise.
///
/// `x_t = ρ_t R_cap (1/√d, √((d−1)/d) s_t)` with `ρ_t ~ U[¾, 1]` and `s_t`
/// uniform on the unit sphere of `R^{d−1}` (for `d = 1`, `x_t = ρ_t R_cap`).
/// Every coordinate then has second moment `E[ρ²] R_cap² / d`, so the
/// covariance stays well conditioned as `d` grows. The first coordinate acts
/// as a scaled intercept and carries the treatment effect, so `τ ≈ effect`. Noise is `ε(1) = σ₁(√|ρ| z₀ + √(1−|ρ|) z₁)` and
/// `ε(0) = σ₀(sign(ρ)√|ρ| z₀ + √(1−|ρ|) z₂)` with `σ₀ = σ₁ / noise_ratio`,
/// which makes the residual correlation `ρ` in expectation.
pub fn gen_stationary(params: &StationaryParams, rng: &mut RngStream) -> Result<PotentialOutcomeSequence> {
    params.validate()?;
    let (t_len, d) = (params.horizon, params.dim);
    let mean_first = 0.875 * params.r_cap / (d as f64).sqrt();
    let level = 1.0;
    let mut beta0 = vec![0.5; d];
    let mut beta1 = vec![1.0; d];
    beta0[0] = level / mean_first;
    beta1[0] = (level + params.effect) / mean_first;

    let shared = params.rho_target.abs().sqrt();
    let own = (1.0 - params.rho_target.abs()).sqrt();
    let sign = if params.rho_target < 0.0 { -1.0 } else { 1.0 };
    let sd1 = params.noise_sd;
    let sd0 = params.noise_sd / params.noise_ratio;

    let mut x = DenseMatrix::zeros(t_len, d);
    let (mut y1, mut y0) = (Vec::with_capacity(t_len), Vec::with_capacity(t_len));
    let mut dir = vec![0.0; d.saturating_sub(1)];
    for i in 0..t_len {
        let radius = params.r_cap * (0.75 + 0.25 * rng.uniform());
        let row = x.row_mut(i);
        if d == 1 {
            row[0] = radius;
        } else {
            loop {
                dir.iter_mut().for_each(|v| *v = rng.standard_normal());
                let n = norm(&dir);
                if n > 1e-12 {
                    dir.iter_mut().for_each(|v| *v /= n);
                    break;
                }
            }
            row[0] = radius / (d as f64).sqrt();
            let c = radius * ((d - 1) as f64 / d as f64).sqrt();
            for (r, s) in row[1..].iter_mut().zip(&dir) {
                *r = c * s;
            }
        }
        let row = x.row(i);
        let (z0, z1, z2) = (rng.standard_normal(), rng.standard_normal(), rng.standard_normal());
        let m1: f64 = row.iter().zip(&beta1).map(|(a, b)| a * b).sum();
        let m0: f64 = row.iter().zip(&beta0).map(|(a, b)| a * b).sum();
        y1.push(m1 + sd1 * (shared * z0 + own * z1));
        y0.push(m0 + sd0 * (sign * shared * z0 + own * z2));
    }
    PotentialOutcomeSequence::new(y1, y0, x, format!("stationary(T={t_len},d={d},rho={})", params.rho_target))
}

fn lower_bound_from(spike: f64, d_pair: (f64, f64), eps: &[f64], label: String) -> Result<PotentialOutcomeSequence> {
    let t_len = eps.len();
    let mut y1 = Vec::with_capacity(t_len);
    let mut y0 = Vec::with_capacity(t_len);
    for (i, &e) in eps.iter().enumerate() {
        let base = if i == 0 { spike } else { 1.0 };
        y1.push(d_pair.0 * (base + e));
        y0.push(d_pair.1 * (base + e));
    }
    let x = DenseMatrix::from_flat(t_len, 1, vec![1.0; t_len])?;
    PotentialOutcomeSequence::new(y1, y0, x, label)
}

fn draw_lower_bound(t_len: usize, rng: &mut RngStream) -> Result<((f64, f64), Vec<f64>)> {
    if t_len < 2 {
        return Err(Error::InvalidConfig(format!("lower-bound construction needs T >= 2, got {t_len}")));
    }
    let d_pair = if rng.uniform() < 0.5 { (2.0, 4.0) } else { (-4.0, -2.0) };
    let eps = (0..t_len).map(|_| rng.rademacher()).collect();
    Ok((d_pair, eps))
}

/// The main construction with a given sign pattern `D` and noise `ε`.
pub fn lower_bound_main_from(d_pair: (f64, f64), eps: &[f64]) -> Result<PotentialOutcomeSequence> {
    let t_len = eps.len();
    lower_bound_from((t_len as f64).powf(0.25), d_pair, eps, format!("lower_bound_main(T={t_len})"))
}

pub fn lower_bound_unbounded_from(d_pair: (f64, f64), eps: &[f64]) -> Result<PotentialOutcomeSequence> {
    let t_len = eps.len();
    lower_bound_from((t_len as f64).sqrt(), d_pair, eps, format!("lower_bound_unbounded(T={t_len})"))
}

/// One draw from the randomized lower-bound ensemble.
///
/// `d = 1`, `x_t = 1`, a single Rademacher `ε_t` per step shared by both
/// arms, `D ∈ {(2, 4), (−4, −2)}` with equal probability, and a first-step
/// spike of size `T^{1/4}`.
pub fn gen_lower_bound_main(t_len: usize, rng: &mut RngStream) -> Result<PotentialOutcomeSequence> {
    let (d_pair, eps) = draw_lower_bound(t_len, rng)?;
    lower_bound_main_from(d_pair, &eps)
}

/// As [`gen_lower_bound_main`] with a `T^{1/2}` spike, which breaks the
/// fourth-moment bound.
pub fn gen_lower_bound_unbounded(t_len: usize, rng: &mut RngStream) -> Result<PotentialOutcomeSequence> {
    let (d_pair, eps) = draw_lower_bound(t_len, rng)?;
    lower_bound_unbounded_from(d_pair, &eps)
}

/// `d = T/2` with `x_t = e_t` for `t ≤ T/2` and `x_t = 0` afterwards;
/// `y_t(1) = y_t(0)` uniform on `{±1}`.
pub fn gen_lower_bound_degenerate_covariates(t_len: usize, rng: &mut RngStream) -> Result<PotentialOutcomeSequence> {
    if t_len % 2 == 1 {
        return Err(Error::TOdd(t_len));
    }
    if t_len == 0 {
        return Err(Error::InvalidConfig("T must be positive".into()));
    }
    let d = t_len / 2;
    let mut x = DenseMatrix::zeros(t_len, d);
    for i in 0..d {
        x.row_mut(i)[i] = 1.0;
    }
    let y: Vec<f64> = (0..t_len).map(|_| rng.rademacher()).collect();
    PotentialOutcomeSequence::new(y.clone(), y, x, format!("lower_bound_degenerate(T={t_len})"))
}

/// Finite-T statistics for the regularity assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `min_k E(k)`; absent when the OLS fit is not identified.
    pub c0_hat: Option<f64>,
    /// `max_k ((1/T) Σ y_t(k)⁴)^{1/4}`
    pub c1_hat: f64,
    /// `(t, σ_min((1/t) Σ_{s≤t} x_s x_sᵀ))` for `t ≥ ⌈√T⌉`, subsampled to at
    /// most 512 points.
    pub sigma_min_profile: Vec<(usize, f64)>,
    pub r_max: f64,
    pub r_over_t14: f64,
    pub rho: Option<f64>,
    /// `σ_min ≥ 1/c2` at every `t ≥ γ0 √T`.
    pub assumption2_pass: bool,
    pub assumption2_first_failure: Option<usize>,
}

pub const PROFILE_POINTS: usize = 512;

pub fn check_assumptions(seq: &PotentialOutcomeSequence, gamma0: f64, c2: f64) -> AssumptionReport {
    let t_len = seq.len();
    let d = seq.dim();
    let tf = t_len as f64;

    let fourth = |y: &[f64]| (y.iter().map(|v| v.powi(4)).sum::<f64>() / tf).powf(0.25);
    let c1_hat = fourth(&seq.y1).max(fourth(&seq.y0));

    let (c0_hat, rho) = match (ols_fit(&seq.x, &seq.y1), ols_fit(&seq.x, &seq.y0)) {
        (Ok(f1), Ok(f0)) => {
            let cross: f64 = f1.residuals.iter().zip(&f0.residuals).map(|(a, b)| a * b).sum::<f64>() / tf;
            let denom = f1.rms * f0.rms;
            let rho = if denom > 0.0 { Some((cross / denom).clamp(-1.0, 1.0)) } else { None };
            (Some(f1.rms.min(f0.rms)), rho)
        }
        _ => (None, None),
    };

    let start = (tf.sqrt().ceil() as usize).max(1);
    let n_profile = t_len.saturating_sub(start) + 1;
    let stride = n_profile.div_ceil(PROFILE_POINTS).max(1);
    let a2_start = ((gamma0 * tf.sqrt()).ceil() as usize).max(1);
    let shift = 1.0 / c2;

    let mut gram = SymmetricMatrix::zeros(d);
    let mut profile = Vec::new();
    let mut first_failure = None;
    let mut scaled = SymmetricMatrix::zeros(d);
    for t in 1..=t_len {
        gram.add_outer(seq.x.row(t - 1), 1.0);
        let in_profile = t >= start && ((t - start).is_multiple_of(stride) || t == t_len);
        let in_a2 = t >= a2_start && first_failure.is_none();
        if !(in_profile || in_a2) {
            continue;
        }
        scaled.clone_from(&gram);
        scaled.scale(1.0 / t as f64);
        if in_profile {
            profile.push((t, min_eigenvalue(&scaled)));
        }
        if in_a2 {
            scaled.add_diag(-shift);
            if !is_psd(&scaled, 1e-12) {
                first_failure = Some(t);
            }
        }
    }

    let r_max = seq.max_radius();
    AssumptionReport {
        c0_hat,
        c1_hat,
        sigma_min_profile: profile,
        r_max,
        r_over_t14: r_max / tf.powf(0.25),
        rho,
        assumption2_pass: first_failure.is_none(),
        assumption2_first_failure: first_failure,
    }
}
