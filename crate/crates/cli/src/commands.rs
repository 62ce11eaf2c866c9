//! The six harness commands, each producing one [`Table`].

use neyman_core::design::ftrl_differences;
use neyman_core::estimator::{aipw_estimate, infer, variance_bound_estimate, wald_ci};
use neyman_core::numerics::{dot, solve_spd, DenseMatrix, RngStream};
use neyman_core::oracle::{regret_components, summarize};
use neyman_core::sequences::check_assumptions;
use neyman_core::sigmoid::{bregman_psi, linspace, verify_condition};
use neyman_core::{PotentialOutcomeSequence, RunLog, SigmoidSpec};

use crate::config::{Command, ExperimentConfig};
use crate::error::Result;
use crate::sim::{ls_slope, mean_se, thread_pool, Scenario};
use crate::table::{Cell, Table};

/// Receives one line per completed horizon.
pub type Progress<'a> = &'a (dyn Fn(&str) + Sync);

pub const SIMULATE_HEADER: &[&str] =
    &["rep", "T", "tau", "tau_hat", "ci_low", "ci_high", "g_sum", "r_prob", "r_pred", "neyman_regret"];
pub const SWEEP_HEADER: &[&str] = &[
    "T",
    "reps",
    "mean_regret",
    "se_regret",
    "mean_r_prob",
    "mean_r_pred",
    "scaled_regret",
    "se_scaled",
    "var_regret",
    "slope_loglog",
];
pub const COVERAGE_HEADER: &[&str] = &["T", "alpha", "reps", "empirical_coverage", "mean_width"];
pub const VERIFY_HEADER: &[&str] = &[
    "kind",
    "b1",
    "b2",
    "b3",
    "grid_size",
    "max_violation",
    "violated_clause",
    "pass",
    "monotone",
    "symmetry",
    "convexity",
    "bound_3a",
    "bound_3b",
    "bound_3c",
];
pub const CHECK_HEADER: &[&str] = &["T", "quantity", "value"];
pub const IDENTITIES_HEADER: &[&str] = &["identity", "max_rel_deviation", "checks", "tolerance", "pass"];

/// Replications needed before the variance-of-τ̂ regret estimate is shown.
pub const VAR_REGRET_MIN_REPS: u64 = 10_000;

pub fn run_command(cfg: &ExperimentConfig, progress: Progress<'_>) -> Result<Table> {
    match cfg.command {
        Command::Simulate => simulate(cfg, progress),
        Command::SweepRegret => sweep_regret(cfg, progress),
        Command::Coverage => coverage(cfg, progress),
        Command::VerifySigmoid => verify_sigmoid(cfg),
        Command::CheckSequence => check_sequence(cfg),
        Command::Identities => identities(cfg, progress),
    }
}

/// Runs the command and renders its table in the configured format.
pub fn execute(cfg: &ExperimentConfig, progress: Progress<'_>) -> Result<Vec<u8>> {
    run_command(cfg, progress)?.render(cfg.json)
}

pub fn simulate(cfg: &ExperimentConfig, progress: Progress<'_>) -> Result<Table> {
    let pool = thread_pool(cfg.workers)?;
    let alpha = cfg.alphas[0];
    let mut table = Table::new(SIMULATE_HEADER);
    for &t in &cfg.horizons {
        let sc = Scenario::new(cfg, t, true)?;
        let rows = sc.replicate(&pool, cfg.replications, |rep| {
            let r = sc.realize(rep, true)?;
            let inf = infer(&r.log, &r.seq.x, alpha)?;
            let b = regret_components(&r.log, &r.seq, r.summary()?)?;
            Ok(vec![
                Cell::from(rep),
                t.into(),
                r.seq.tau().into(),
                inf.tau_hat.into(),
                inf.ci_low.into(),
                inf.ci_high.into(),
                b.g_sum.into(),
                b.r_prob.into(),
                b.r_pred.into(),
                b.neyman_regret_realized.into(),
            ])
        })?;
        rows.into_iter().for_each(|r| table.push(r));
        progress(&format!("simulate: T = {t} done ({} replications)", cfg.replications));
    }
    Ok(table)
}

struct SweepDraw {
    regret: f64,
    r_prob: f64,
    r_pred: f64,
    var_regret: f64,
}

/// Per-`T` regret summaries plus an aggregate row with the log-log slope.
///
/// Regret is `g_sum/T − T·V*` averaged over replications; `mean_r_prob` and
/// `mean_r_pred` are divided by `T` so that they add up to `mean_regret`.
pub fn sweep_regret(cfg: &ExperimentConfig, progress: Progress<'_>) -> Result<Table> {
    let pool = thread_pool(cfg.workers)?;
    let mut table = Table::new(SWEEP_HEADER);
    let mut fit = (Vec::new(), Vec::new());
    for &t in &cfg.horizons {
        let sc = Scenario::new(cfg, t, true)?;
        let tf = t as f64;
        let draws = sc.replicate(&pool, cfg.replications, |rep| {
            let r = sc.realize(rep, true)?;
            let s = r.summary()?;
            let b = regret_components(&r.log, &r.seq, s)?;
            let tau_hat = aipw_estimate(&r.log, &r.seq.x)?;
            Ok(SweepDraw {
                regret: b.neyman_regret_realized,
                r_prob: b.r_prob / tf,
                r_pred: b.r_pred / tf,
                var_regret: tf * (tau_hat - r.seq.tau()).powi(2) - s.v_star_t,
            })
        })?;
        let col = |f: fn(&SweepDraw) -> f64| draws.iter().map(f).collect::<Vec<f64>>();
        let (m, se) = mean_se(&col(|d| d.regret));
        let (mp, _) = mean_se(&col(|d| d.r_prob));
        let (mr, _) = mean_se(&col(|d| d.r_pred));
        let var_regret = (cfg.replications >= VAR_REGRET_MIN_REPS).then(|| mean_se(&col(|d| d.var_regret)).0);
        if m > 0.0 {
            fit.0.push(tf.ln());
            fit.1.push(m.ln());
        }
        table.push(vec![
            t.into(),
            cfg.replications.into(),
            m.into(),
            se.into(),
            mp.into(),
            mr.into(),
            (m * tf.sqrt()).into(),
            (se * tf.sqrt()).into(),
            var_regret.into(),
            Cell::Empty,
        ]);
        progress(&format!("sweep-regret: T = {t}, mean regret {m:.6} ± {se:.6}"));
    }
    let slope = ls_slope(&fit.0, &fit.1).map(|(s, _)| s);
    let mut agg = vec![Cell::Empty; SWEEP_HEADER.len()];
    agg[0] = "all".into();
    agg[1] = cfg.replications.into();
    agg[SWEEP_HEADER.len() - 1] = slope.into();
    table.push(agg);
    Ok(table)
}

pub fn coverage(cfg: &ExperimentConfig, progress: Progress<'_>) -> Result<Table> {
    let pool = thread_pool(cfg.workers)?;
    let mut table = Table::new(COVERAGE_HEADER);
    for &t in &cfg.horizons {
        let sc = Scenario::new(cfg, t, false)?;
        let draws = sc.replicate(&pool, cfg.replications, |rep| {
            let r = sc.realize(rep, false)?;
            let tau_hat = aipw_estimate(&r.log, &r.seq.x)?;
            let (e1, e0) = variance_bound_estimate(&r.log, &r.seq.x)?;
            Ok((r.seq.tau(), tau_hat, e1, e0))
        })?;
        for &alpha in &cfg.alphas {
            let (mut hits, mut width) = (0u64, 0.0);
            for &(tau, tau_hat, e1, e0) in &draws {
                let ci = wald_ci(tau_hat, e1, e0, t, alpha)?;
                hits += u64::from(ci.covers(tau));
                width += ci.width();
            }
            let n = draws.len() as f64;
            table.push(vec![
                t.into(),
                alpha.into(),
                cfg.replications.into(),
                (hits as f64 / n).into(),
                (width / n).into(),
            ]);
        }
        progress(&format!("coverage: T = {t} done"));
    }
    Ok(table)
}

pub fn verify_sigmoid(cfg: &ExperimentConfig) -> Result<Table> {
    let grid = linspace(cfg.grid_min, cfg.grid_max, cfg.grid_points);
    let mut table = Table::new(VERIFY_HEADER);
    for s in &cfg.sigmoids {
        let r = verify_condition(s, &grid);
        let mut row = vec![
            r.kind.to_string().into(),
            s.b1().into(),
            s.b2().into(),
            s.b3().into(),
            r.grid_size.into(),
            r.max_violation.into(),
            r.violated_clause.map(|c| c.to_string()).into(),
            r.violated_clause.is_none().into(),
        ];
        row.extend(r.per_clause.iter().map(|&(_, v)| Cell::from(v)));
        table.push(row);
    }
    Ok(table)
}

pub fn check_sequence(cfg: &ExperimentConfig) -> Result<Table> {
    let mut table = Table::new(CHECK_HEADER);
    for &t in &cfg.horizons {
        let sc = Scenario::new(cfg, t, false)?;
        let seq = sc.sequence(&mut RngStream::new(cfg.base_seed, 0))?;
        if let Some(path) = &cfg.save_sequence {
            let path = if cfg.horizons.len() > 1 {
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sequence");
                path.with_file_name(format!("{stem}_T{t}.csv"))
            } else {
                path.clone()
            };
            seq.save_csv(&path)?;
        }
        let rep = check_assumptions(&seq, cfg.gamma0, cfg.c2);
        let sigma_min = rep.sigma_min_profile.iter().map(|&(_, v)| v).reduce(f64::min);
        let mut push = |q: &str, v: Cell| table.push(vec![t.into(), q.into(), v]);
        push("label", seq.label.clone().into());
        push("dim", seq.dim().into());
        push("c0_hat", rep.c0_hat.into());
        push("c1_hat", rep.c1_hat.into());
        push("sigma_min", sigma_min.into());
        push("r_max", rep.r_max.into());
        push("r_over_t14", rep.r_over_t14.into());
        push("rho", rep.rho.into());
        push("assumption2_pass", rep.assumption2_pass.into());
        push("assumption2_first_failure", rep.assumption2_first_failure.into());
        let summary = summarize(&seq).ok();
        let oracle = |f: fn(&neyman_core::OracleSummary) -> f64| summary.as_ref().map(f);
        push("tau", seq.tau().into());
        push("e1", oracle(|s| s.e1).into());
        push("e0", oracle(|s| s.e0).into());
        push("p_star", oracle(|s| s.p_star).into());
        push("v_star_t", oracle(|s| s.v_star_t).into());
        push("vb_t", oracle(|s| s.vb_t).into());
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy)]
struct Tally {
    worst: f64,
    checks: u64,
}

impl Tally {
    const EMPTY: Tally = Tally { worst: 0.0, checks: 0 };

    fn add(&mut self, dev: f64) {
        self.merge(Tally { worst: dev, checks: 1 });
    }

    fn merge(&mut self, other: Tally) {
        if other.checks > 0 {
            // NaN deviations must surface, so they win over any finite value.
            self.worst =
                if other.worst.is_nan() || self.worst.is_nan() { f64::NAN } else { self.worst.max(other.worst) };
            self.checks += other.checks;
        }
    }
}

pub const IDENTITY_TOLERANCE: f64 = 1e-8;
pub const VARIANCE_TOLERANCE: f64 = 1e-10;
pub const BREGMAN_PAIRS: usize = 100_000;

/// Runs the exact-identity suite and reports the worst relative deviation
/// of each identity. Deviations are data: a failed identity is a row with
/// `pass = false`, not an error.
pub fn identities(cfg: &ExperimentConfig, progress: Progress<'_>) -> Result<Table> {
    let pool = thread_pool(cfg.workers)?;
    let spec = cfg.sigmoid();
    // [decomposition, ftrl, variance, selection]
    let mut totals = [Tally::EMPTY; 4];
    for &t in &cfg.horizons {
        let sc = Scenario::new(cfg, t, false)?;
        let per_rep = sc.replicate(&pool, cfg.replications, |rep| {
            let r = sc.realize(rep, false)?;
            let mut tallies = [Tally::EMPTY; 4];
            if let Some(s) = r.summary.as_deref() {
                tallies[0].add(regret_components(&r.log, &r.seq, s)?.relative_reconciliation());
                let (f1, f0) = variance_bound_estimate(&r.log, &r.seq.x)?;
                for (fast, arm) in [(f1, true), (f0, false)] {
                    let lit = literal_variance_estimate(&r.log, &r.seq.x, arm)?;
                    tallies[2].add((fast - lit).abs() / lit.abs().max(fast.abs()).max(1e-300));
                }
            }
            for arm in [true, false] {
                for d in ftrl_differences(&r.log, &r.seq.x, arm, cfg.leverage_perturbation)? {
                    tallies[1].add(d.relative_deviation());
                }
            }
            let steps = &r.log.steps;
            let mut probe = vec![0, steps.len() / 2, steps.len() - 1];
            probe.dedup();
            for i in probe {
                let s = &steps[i];
                tallies[3].add(selection_gap(&spec, s.ahat1_before, s.ahat0_before, s.eta, s.p)?);
            }
            Ok(tallies)
        })?;
        for tallies in per_rep {
            for (tot, x) in totals.iter_mut().zip(tallies) {
                tot.merge(x);
            }
        }
        progress(&format!("identities: T = {t} done"));
    }

    let mut bregman = Tally::EMPTY;
    let mut rng = RngStream::new(cfg.base_seed, u64::MAX - 1);
    for _ in 0..BREGMAN_PAIRS {
        let v = 20.0 * rng.uniform() - 10.0;
        let u = 20.0 * rng.uniform() - 10.0;
        let bound = 0.5 * (v - u).powi(2) * (1.0 + 0.5 * v.abs() + u.abs());
        let b = bregman_psi(v, u);
        bregman.add(((bound - b).max(0.0) - 1e-12).max(0.0) / bound.max(1e-300));
    }

    let mut table = Table::new(IDENTITIES_HEADER);
    let names = [
        ("regret_decomposition", IDENTITY_TOLERANCE),
        ("ftrl_successive_difference", IDENTITY_TOLERANCE),
        ("variance_estimator_fast_vs_literal", VARIANCE_TOLERANCE),
        ("select_probability_vs_grid", IDENTITY_TOLERANCE),
    ];
    for ((name, tol), tally) in
        names.into_iter().zip(totals).chain([(("bregman_lower_bound", IDENTITY_TOLERANCE), bregman)])
    {
        let pass = (tally.checks > 0).then_some(tally.worst <= tol);
        table.push(vec![name.into(), tally.worst.into(), tally.checks.into(), tol.into(), pass.into()]);
    }
    Ok(table)
}

/// `Ê²(k)` as the literal pairwise sum with `Q = I − X(XᵀX)⁻¹Xᵀ`.
fn literal_variance_estimate(log: &RunLog, x: &DenseMatrix, arm: bool) -> Result<f64> {
    let gram = x.gram_prefix(x.rows());
    let h: Vec<Vec<f64>> = x.iter_rows().map(|row| solve_spd(&gram, row)).collect::<neyman_core::Result<_>>()?;
    let n = x.rows();
    let mut total = 0.0;
    for t in 0..n {
        let st = &log.steps[t];
        if st.z != arm {
            continue;
        }
        let wt = if arm { st.p } else { 1.0 - st.p };
        for s in 0..n {
            let ss = &log.steps[s];
            if ss.z != arm {
                continue;
            }
            let ws = if arm { ss.p } else { 1.0 - ss.p };
            let q = f64::from(u8::from(s == t)) - dot(x.row(s), &h[t]);
            total += if s == t { q * st.y_obs * st.y_obs / wt } else { q * st.y_obs * ss.y_obs / (wt * ws) };
        }
    }
    Ok(total / n as f64)
}

/// How much worse the selected probability is than a nested grid search,
/// relative to the grid optimum of `a1/p + a0/(1−p) + η⁻¹Ψ(p)`.
fn selection_gap(spec: &SigmoidSpec, a1: f64, a0: f64, eta: f64, p: f64) -> Result<f64> {
    let h = |q: f64| -> f64 {
        match spec.regularizer(q) {
            Ok(r) => a1 / q + a0 / (1.0 - q) + r / eta,
            Err(_) => f64::INFINITY,
        }
    };
    let mut best = 0.5;
    let mut step: f64 = 1e-3;
    let mut lo = step;
    let mut hi = 1.0 - step;
    for _ in 0..3 {
        let n = ((hi - lo) / step).round() as usize;
        best = (0..=n)
            .map(|k| lo + step * k as f64)
            .filter(|q| *q > 0.0 && *q < 1.0)
            .min_by(|a, b| h(*a).total_cmp(&h(*b)))
            .unwrap_or(best);
        lo = best - step;
        hi = best + step;
        step *= 1e-3;
    }
    let grid = h(best);
    Ok((h(p) - grid).max(0.0) / grid.abs().max(1e-300))
}

/// Writes rendered output to the configured path, or returns it for stdout.
pub fn deliver(cfg: &ExperimentConfig, bytes: &[u8]) -> Result<bool> {
    match &cfg.output_path {
        Some(path) => {
            std::fs::write(path, bytes)
                .map_err(|e| crate::error::HarnessError::Config(format!("cannot write {}: {e}", path.display())))?;
            Ok(true)
        }
        None => Ok(false),
    }
}

/// The sequence a replication would see, for inspection.
pub fn sequence_for(cfg: &ExperimentConfig, horizon: usize, rep: u64) -> Result<PotentialOutcomeSequence> {
    let sc = Scenario::new(cfg, horizon, false)?;
    Ok(sc.sequence(&mut RngStream::new(cfg.base_seed, rep))?.into_owned())
}
