//! Sigmoid-FTRL: the adaptive assignment loop.
//!
//! Per subject the engine
//! 1. updates the running radius `R_t` and step size `η_t = T^{-1/2} R_t^{-2}`,
//! 2. fits ridge predictors on inverse-probability-weighted pseudo-outcomes,
//! 3. picks `p_t` by minimizing `Â1/p + Â0/(1−p) + η_t⁻¹ Ψ(p)`,
//! 4. samples the assignment, and
//! 5. after the outcome arrives, folds it into the Gram matrix, the
//!    cross-moments and the online residual sums `Â(k)`.
//!
//! Steps 1-4 are [`DesignState::step`], step 5 is
//! [`DesignState::record_outcome`]. The residual added to `Â(k)` at time `s`
//! uses the prediction made at time `s`, so the prediction is carried in the
//! [`Assignment`] rather than recomputed.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, minimize_scalar_convex_with, norm, Cholesky, RngStream, RootOptions, SymmetricMatrix};
use crate::sequences::PotentialOutcomeSequence;
use crate::sigmoid::{dpsi, SigmoidSpec};

pub const DEFAULT_P_FLOOR: f64 = 1e-12;

/// `η = T^{-1/2} R^{-2}`
#[inline]
pub fn step_size(horizon: usize, radius: f64) -> f64 {
    1.0 / ((horizon as f64).sqrt() * radius * radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub horizon: usize,
    pub dim: usize,
    pub sigmoid: SigmoidSpec,
    pub p_floor: f64,
}

impl DesignConfig {
    pub fn new(horizon: usize, dim: usize, sigmoid: SigmoidSpec) -> Result<Self> {
        let c = Self { horizon, dim, sigmoid, p_floor: DEFAULT_P_FLOOR };
        c.validate()?;
        Ok(c)
    }

    pub fn with_p_floor(self, p_floor: f64) -> Result<Self> {
        let c = Self { p_floor, ..self };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dimension must be at least 1".into()));
        }
        if !(self.p_floor > 0.0 && self.p_floor < 1e-6) {
            return Err(Error::InvalidConfig(format!("p_floor must lie in (0, 1e-6), got {}", self.p_floor)));
        }
        Ok(())
    }
}

/// What the experimenter commits to before seeing subject `t`'s outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Assignment {
    pub t: usize,
    pub z: bool,
    pub p: f64,
    pub pred1: f64,
    pub pred0: f64,
    pub eta: f64,
    pub r: f64,
    pub ahat1_before: f64,
    pub ahat0_before: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub p: f64,
    pub z: bool,
    pub y_obs: f64,
    pub pred1: f64,
    pub pred0: f64,
    pub eta: f64,
    pub r: f64,
    pub ahat1_before: f64,
    pub ahat0_before: f64,
}

impl StepRecord {
    /// `p` if treated, `1 − p` otherwise.
    #[inline]
    pub fn weight(&self) -> f64 {
        if self.z {
            self.p
        } else {
            1.0 - self.p
        }
    }
}

/// Everything the experimenter saw during one run.
///
/// Shared by the adaptive design and the fixed baselines, which is why it
/// carries only the dimension and not a full [`DesignConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub dim: usize,
    pub steps: Vec<StepRecord>,
    /// Number of steps where `p` hit the floor clamp.
    pub clamp_count: usize,
    /// `(Â_T(1), Â_T(0))` after the last outcome.
    pub final_ahat: (f64, f64),
}

pub const RUNLOG_HEADER: [&str; 10] =
    ["t", "p", "z", "y_obs", "pred1", "pred0", "eta", "r", "ahat1_before", "ahat0_before"];

impl RunLog {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(RUNLOG_HEADER).map_err(io)?;
        for s in &self.steps {
            w.write_record([
                s.t.to_string(),
                s.p.to_string(),
                u8::from(s.z).to_string(),
                s.y_obs.to_string(),
                s.pred1.to_string(),
                s.pred0.to_string(),
                s.eta.to_string(),
                s.r.to_string(),
                s.ahat1_before.to_string(),
                s.ahat0_before.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub p: f64,
    /// Root of the first-order condition for the larger of the two arms.
    pub u: f64,
    pub clamped: bool,
}

/// The minimizing probability for residual sums `(a1, a0)` and step size `eta`.
///
/// Always satisfies `a1 ≥ a0 ⇒ p ≥ ½`, and swapping the arguments returns
/// `1 − p` bit for bit: the first-order condition is solved once for the
/// larger arm and the other probability is its complement.
pub fn select_probability(sigmoid: &SigmoidSpec, a1: f64, a0: f64, eta: f64) -> f64 {
    select_probability_with(sigmoid, a1, a0, eta, 0.0, DEFAULT_P_FLOOR)
        .expect("first-order condition is coercive for eta > 0")
        .p
}

pub fn select_probability_with(
    sigmoid: &SigmoidSpec,
    a1: f64,
    a0: f64,
    eta: f64,
    hint: f64,
    p_floor: f64,
) -> Result<Selection> {
    let (hi, lo) = if a1 >= a0 { (a1, a0) } else { (a0, a1) };
    let inv_eta = 1.0 / eta;
    // F(u) = hi·(1/φ)'(u) + lo·(1/(1−φ))'(u) + η⁻¹ψ'(u); increasing, root at u ≥ 0.
    let foc = |u: f64| {
        let (d1, _) = sigmoid.inv_phi_derivs(u);
        let (e1, _) = sigmoid.inv_one_minus_phi_derivs(u);
        hi * d1 + lo * e1 + inv_eta * dpsi(u)
    };
    let u = if hi == lo { 0.0 } else { minimize_scalar_convex_with(foc, hint.max(0.0), RootOptions::default())? };
    let mut big = sigmoid.phi(u);
    let mut clamped = false;
    if big > 1.0 - p_floor {
        big = 1.0 - p_floor;
        clamped = true;
    }
    let p = if a1 >= a0 { big } else { 1.0 - big };
    Ok(Selection { p, u, clamped })
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    t: usize,
}

/// Mutable state of one adaptive run. Single owner, stepped sequentially.
#[derive(Debug, Clone)]
pub struct DesignState {
    config: DesignConfig,
    t: usize,
    gram: SymmetricMatrix,
    cross1: Vec<f64>,
    cross0: Vec<f64>,
    ahat1: f64,
    ahat0: f64,
    r_max: f64,
    eta: f64,
    pending: Option<Pending>,
    clamp_count: usize,
    last_u: f64,
    ridge: SymmetricMatrix,
    chol: Cholesky,
    beta1: Vec<f64>,
    beta0: Vec<f64>,
}

impl DesignState {
    pub fn new(config: DesignConfig) -> Self {
        let d = config.dim;
        Self {
            config,
            t: 1,
            gram: SymmetricMatrix::zeros(d),
            cross1: vec![0.0; d],
            cross0: vec![0.0; d],
            ahat1: 0.0,
            ahat0: 0.0,
            r_max: 1.0,
            eta: step_size(config.horizon, 1.0),
            pending: None,
            clamp_count: 0,
            last_u: 0.0,
            ridge: SymmetricMatrix::zeros(d),
            chol: Cholesky::new(d),
            beta1: vec![0.0; d],
            beta0: vec![0.0; d],
        }
    }

    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    /// Index of the next subject (1-based).
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn gram(&self) -> &SymmetricMatrix {
        &self.gram
    }

    pub fn cross(&self) -> (&[f64], &[f64]) {
        (&self.cross1, &self.cross0)
    }

    pub fn ahat(&self) -> (f64, f64) {
        (self.ahat1, self.ahat0)
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn clamp_count(&self) -> usize {
        self.clamp_count
    }

    /// `(β_t(1), β_t(0))` as fitted by the most recent [`DesignState::step`].
    pub fn predictors(&self) -> (&[f64], &[f64]) {
        (&self.beta1, &self.beta0)
    }

    /// Updates `R_t` and `η_t` for a newly arrived covariate.
    pub fn observe_covariate(&mut self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.dim {
            return Err(Error::DimensionMismatch { expected: self.config.dim, got: x.len() });
        }
        self.r_max = self.r_max.max(norm(x));
        self.eta = step_size(self.config.horizon, self.r_max);
        Ok(())
    }

    fn refit(&mut self) -> Result<()> {
        self.ridge.clone_from(&self.gram);
        self.ridge.add_diag(1.0 / self.eta);
        self.chol.refactor(&self.ridge)?;
        self.beta1.copy_from_slice(&self.cross1);
        self.beta0.copy_from_slice(&self.cross0);
        self.chol.solve_in_place(&mut self.beta1);
        self.chol.solve_in_place(&mut self.beta0);
        Ok(())
    }

    /// Ridge predictors `(G + η⁻¹I)⁻¹ c(k)` at the current `η`.
    pub fn fit_predictors(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut ridge = self.gram.clone();
        ridge.add_diag(1.0 / self.eta);
        let chol = Cholesky::factor(&ridge)?;
        Ok((chol.solve(&self.cross1), chol.solve(&self.cross0)))
    }

    /// Commits to `p_t` and `Z_t` for covariate `x`.
    pub fn step(&mut self, x: &[f64], uniform_draw: f64) -> Result<Assignment> {
        if self.pending.is_some() || self.t > self.config.horizon {
            return Err(Error::OutOfOrder { step: self.t });
        }
        self.observe_covariate(x)?;
        self.refit()?;
        let pred1 = dot(x, &self.beta1);
        let pred0 = dot(x, &self.beta0);
        let sel = select_probability_with(
            &self.config.sigmoid,
            self.ahat1,
            self.ahat0,
            self.eta,
            self.last_u,
            self.config.p_floor,
        )?;
        self.last_u = sel.u;
        if sel.clamped {
            self.clamp_count += 1;
        }
        self.pending = Some(Pending { t: self.t });
        Ok(Assignment {
            t: self.t,
            z: uniform_draw < sel.p,
            p: sel.p,
            pred1,
            pred0,
            eta: self.eta,
            r: self.r_max,
            ahat1_before: self.ahat1,
            ahat0_before: self.ahat0,
        })
    }

    /// Folds the observed outcome of the pending assignment into the state.
    pub fn record_outcome(&mut self, x: &[f64], a: &Assignment, y_obs: f64) -> Result<StepRecord> {
        match self.pending {
            Some(Pending { t }) if t == a.t => {}
            _ => return Err(Error::OutOfOrder { step: a.t }),
        }
        if x.len() != self.config.dim {
            return Err(Error::DimensionMismatch { expected: self.config.dim, got: x.len() });
        }
        self.gram.add_outer(x, 1.0);
        if a.z {
            let w = a.p;
            for (c, xi) in self.cross1.iter_mut().zip(x) {
                *c += xi * (y_obs / w);
            }
            let r = y_obs - a.pred1;
            self.ahat1 += r * r / w;
        } else {
            let w = 1.0 - a.p;
            for (c, xi) in self.cross0.iter_mut().zip(x) {
                *c += xi * (y_obs / w);
            }
            let r = y_obs - a.pred0;
            self.ahat0 += r * r / w;
        }
        self.pending = None;
        self.t += 1;
        Ok(StepRecord {
            t: a.t,
            p: a.p,
            z: a.z,
            y_obs,
            pred1: a.pred1,
            pred0: a.pred0,
            eta: a.eta,
            r: a.r,
            ahat1_before: a.ahat1_before,
            ahat0_before: a.ahat0_before,
        })
    }

    pub fn into_log(self, steps: Vec<StepRecord>) -> RunLog {
        RunLog { dim: self.config.dim, steps, clamp_count: self.clamp_count, final_ahat: (self.ahat1, self.ahat0) }
    }
}

pub(crate) fn check_aligned(config: &DesignConfig, seq: &PotentialOutcomeSequence) -> Result<()> {
    if seq.len() != config.horizon {
        return Err(Error::LengthMismatch { what: "sequence", expected: config.horizon, got: seq.len() });
    }
    if seq.dim() != config.dim {
        return Err(Error::DimensionMismatch { expected: config.dim, got: seq.dim() });
    }
    Ok(())
}

/// Runs the design over a whole sequence, one uniform draw per subject.
pub fn run(config: &DesignConfig, seq: &PotentialOutcomeSequence, rng: &mut RngStream) -> Result<RunLog> {
    check_aligned(config, seq)?;
    let mut state = DesignState::new(*config);
    let mut steps = Vec::with_capacity(config.horizon);
    for i in 0..config.horizon {
        let x = seq.x.row(i);
        let a = state.step(x, rng.uniform())?;
        let y = if a.z { seq.y1[i] } else { seq.y0[i] };
        steps.push(state.record_outcome(x, &a, y)?);
    }
    Ok(state.into_log(steps))
}

/// One step of the successive-difference check for a single arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FtrlDifference {
    pub t: usize,
    /// `L̃(β_t) − L̃(β̃_{t+1})`, evaluated as a quadratic form.
    pub lhs: f64,
    /// `Π_{t,t} / (1 + Π_{t,t}) · (ỹ_t − ⟨x_t, β_t⟩)²`
    pub rhs: f64,
    pub leverage: f64,
    /// `β_tᵀ A β_t`, the size of the quantities whose difference forms
    /// `lhs`; sets the rounding floor when both sides vanish.
    pub scale: f64,
}

impl FtrlDifference {
    pub fn relative_deviation(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs()).max(1e-6 * self.scale);
        if scale < 1e-300 {
            0.0
        } else {
            (self.lhs - self.rhs).abs() / scale
        }
    }
}

/// Replays a run and evaluates the FTRL successive-difference identity for
/// one arm at every step.
///
/// `L̃_{t+1}(β) = Σ_{s≤t} (ỹ_s − ⟨x_s, β⟩)² + η_t⁻¹‖β‖²`, minimized by
/// `β̃_{t+1}`, and `β_t` is the design's predictor. `leverage_scale`
/// multiplies `Π_{t,t}` on the right-hand side; anything but 1 is a
/// deliberate corruption used to show the check has teeth.
pub fn ftrl_differences(
    log: &RunLog,
    covariates: &crate::numerics::DenseMatrix,
    arm: bool,
    leverage_scale: f64,
) -> Result<Vec<FtrlDifference>> {
    if covariates.rows() != log.steps.len() {
        return Err(Error::LengthMismatch { what: "covariates", expected: log.steps.len(), got: covariates.rows() });
    }
    let d = covariates.cols();
    let mut gram = SymmetricMatrix::zeros(d);
    let mut cross = vec![0.0; d];
    let mut out = Vec::with_capacity(log.steps.len());
    for (i, s) in log.steps.iter().enumerate() {
        let x = covariates.row(i);
        let inv_eta = 1.0 / s.eta;

        let mut before = gram.clone();
        before.add_diag(inv_eta);
        let chol_before = Cholesky::factor(&before)?;
        let beta = chol_before.solve(&cross);
        let pi_tt = chol_before.inv_quad(x);

        let ytilde = if s.z == arm { s.y_obs / s.weight() } else { 0.0 };
        gram.add_outer(x, 1.0);
        for (c, xi) in cross.iter_mut().zip(x) {
            *c += xi * ytilde;
        }

        let mut after = gram.clone();
        after.add_diag(inv_eta);
        let beta_next = solve_with(&after, &cross)?;
        let diff: Vec<f64> = beta.iter().zip(&beta_next).map(|(a, b)| a - b).collect();
        let lhs = dot(&diff, &after.mul_vec(&diff));

        let resid = ytilde - dot(x, &beta);
        let pi = pi_tt * leverage_scale;
        out.push(FtrlDifference {
            t: s.t,
            lhs,
            rhs: pi / (1.0 + pi) * resid * resid,
            leverage: pi_tt,
            scale: dot(&beta, &after.mul_vec(&beta)),
        });
    }
    Ok(out)
}

fn solve_with(m: &SymmetricMatrix, rhs: &[f64]) -> Result<Vec<f64>> {
    Ok(Cholesky::factor(m)?.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_state() {
        let s = DesignState::new(DesignConfig::new(10, 2, SigmoidSpec::arctan()).unwrap());
        assert_eq!(s.ahat(), (0.0, 0.0));
        assert_eq!(s.r_max(), 1.0);
        assert_eq!(s.t(), 1);
    }

    #[test]
    fn step_size_follows_radius() {
        let mut s = DesignState::new(DesignConfig::new(4, 1, SigmoidSpec::arctan()).unwrap());
        s.observe_covariate(&[3.0]).unwrap();
        assert!((s.eta() - 1.0 / 18.0).abs() < 1e-16);

        let mut s = DesignState::new(DesignConfig::new(9, 2, SigmoidSpec::arctan()).unwrap());
        s.observe_covariate(&[0.6, 0.8]).unwrap();
        assert!((s.eta() - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn first_step_is_a_fair_coin() {
        let cfg = DesignConfig::new(5, 1, SigmoidSpec::arctan()).unwrap();
        let mut s = DesignState::new(cfg);
        let a = s.step(&[1.0], 0.49).unwrap();
        assert_eq!(a.p, 0.5);
        assert!(a.z);
        assert_eq!((a.pred1, a.pred0), (0.0, 0.0));
        let mut s = DesignState::new(cfg);
        assert!(!s.step(&[1.0], 0.5).unwrap().z);
        let mut s = DesignState::new(cfg);
        assert!(s.step(&[1.0], 0.0).unwrap().z);
    }

    #[test]
    fn scalar_ridge_after_one_step() {
        // T = 1 and R = 1 give η⁻¹ = 1; one treated step with p = ½, y = 1
        // leaves ỹ(1) = 2, so β(1) = 2 / (1 + 1).
        let cfg = DesignConfig::new(1, 1, SigmoidSpec::arctan()).unwrap();
        let mut s = DesignState::new(cfg);
        let (b1, b0) = s.fit_predictors().unwrap();
        assert_eq!((b1[0], b0[0]), (0.0, 0.0));
        let a = s.step(&[1.0], 0.0).unwrap();
        assert_eq!(a.p, 0.5);
        s.record_outcome(&[1.0], &a, 1.0).unwrap();
        s.observe_covariate(&[1.0]).unwrap();
        assert_eq!(s.eta(), 1.0);
        let (b1, b0) = s.fit_predictors().unwrap();
        assert!((b1[0] - 1.0).abs() < 1e-15);
        assert_eq!(b0[0], 0.0);
    }

    #[test]
    fn residual_accumulators() {
        let cfg = DesignConfig::new(3, 1, SigmoidSpec::arctan()).unwrap();
        let mut s = DesignState::new(cfg);
        let a = s.step(&[1.0], 0.0).unwrap();
        let a = Assignment { z: true, p: 0.5, pred1: 1.0, ..a };
        s.record_outcome(&[1.0], &a, 3.0).unwrap();
        assert_eq!(s.ahat(), (8.0, 0.0));

        let b = s.step(&[1.0], 0.999_999).unwrap();
        assert!(!b.z);
        let cross1_before = s.cross().0.to_vec();
        s.record_outcome(&[1.0], &b, 2.0).unwrap();
        assert_eq!(s.ahat().0, 8.0);
        assert_eq!(s.cross().0, &cross1_before[..]);
    }

    #[test]
    fn misuse_is_reported() {
        let cfg = DesignConfig::new(2, 2, SigmoidSpec::algebraic()).unwrap();
        let mut s = DesignState::new(cfg);
        assert!(matches!(s.step(&[1.0], 0.3), Err(Error::DimensionMismatch { .. })));
        let a = s.step(&[1.0, 0.0], 0.3).unwrap();
        assert!(matches!(s.step(&[1.0, 0.0], 0.3), Err(Error::OutOfOrder { .. })));
        s.record_outcome(&[1.0, 0.0], &a, 1.0).unwrap();
        assert!(matches!(s.record_outcome(&[1.0, 0.0], &a, 1.0), Err(Error::OutOfOrder { .. })));
    }

    #[test]
    fn config_validation() {
        let s = SigmoidSpec::arctan();
        assert!(DesignConfig::new(0, 1, s).is_err());
        assert!(DesignConfig::new(1, 0, s).is_err());
        assert!(DesignConfig::new(1, 1, s).unwrap().with_p_floor(1e-3).is_err());
    }

    #[test]
    fn equal_residuals_give_one_half() {
        for spec in [SigmoidSpec::arctan(), SigmoidSpec::algebraic()] {
            for (a, eta) in [(0.0, 1.0), (3.5, 0.01), (1e6, 1e-3)] {
                assert_eq!(select_probability(&spec, a, a, eta), 0.5);
            }
        }
    }
}
