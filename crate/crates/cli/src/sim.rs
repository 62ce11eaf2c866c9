//! Replication machinery shared by the commands.
//!
//! Replication `j` draws everything from `RngStream(base_seed, j)`: first the
//! sequence when the source is a randomized ensemble, then the design's
//! uniforms. Fixed sequences come from the reserved stream `u64::MAX`.

use std::borrow::Cow;

use rayon::prelude::*;

use neyman_core::design::{self, DesignConfig};
use neyman_core::oracle::{self, OracleSummary};
use neyman_core::sequences::{
    gen_lower_bound_degenerate_covariates, gen_lower_bound_main, gen_lower_bound_unbounded, gen_stationary,
};
use neyman_core::{run_baseline, BaselineKind, PotentialOutcomeSequence, RngStream, RunLog};

use crate::config::{DesignKind, ExperimentConfig, SequenceSpec};
use crate::error::{HarnessError, Result};

pub const FIXED_SEQUENCE_STREAM: u64 = u64::MAX;

/// Everything needed to run replications at one horizon.
pub struct Scenario<'a> {
    pub config: &'a ExperimentConfig,
    pub horizon: usize,
    fixed: Option<(PotentialOutcomeSequence, Option<OracleSummary>)>,
}

/// One replication's sequence, run log and (when available) oracle summary.
pub struct Realization<'s> {
    pub seq: Cow<'s, PotentialOutcomeSequence>,
    pub summary: Option<Cow<'s, OracleSummary>>,
    pub log: RunLog,
}

impl Realization<'_> {
    pub fn summary(&self) -> Result<&OracleSummary> {
        self.summary.as_deref().ok_or(HarnessError::Numerical(neyman_core::Error::RankDeficient { sigma_min: 0.0 }))
    }
}

impl<'a> Scenario<'a> {
    /// Prepares the fixed sequence (if any). With `need_summary` the oracle
    /// summary is computed up front and its failure is an error; otherwise it
    /// is attempted and silently left out on failure.
    pub fn new(config: &'a ExperimentConfig, horizon: usize, need_summary: bool) -> Result<Self> {
        let fixed = match &config.sequence {
            SequenceSpec::Stationary(p) => {
                let params = neyman_core::StationaryParams { horizon, ..*p };
                let seq = gen_stationary(&params, &mut RngStream::new(config.base_seed, FIXED_SEQUENCE_STREAM))?;
                Some(seq)
            }
            SequenceSpec::File(path) => Some(PotentialOutcomeSequence::load_csv(path)?),
            _ => None,
        };
        let fixed = match fixed {
            Some(seq) => {
                let summary = summary_for(&seq, need_summary || config.design == DesignKind::OracleNeyman)?;
                Some((seq, summary))
            }
            None => None,
        };
        Ok(Scenario { config, horizon, fixed })
    }

    /// The sequence used by replication `rep` (drawn from its stream for
    /// ensembles), leaving the stream positioned for the design.
    pub fn sequence(&self, rng: &mut RngStream) -> Result<Cow<'_, PotentialOutcomeSequence>> {
        if let Some((seq, _)) = &self.fixed {
            return Ok(Cow::Borrowed(seq));
        }
        let t = self.horizon;
        let seq = match self.config.sequence {
            SequenceSpec::LowerBoundMain => gen_lower_bound_main(t, rng)?,
            SequenceSpec::LowerBoundUnbounded => gen_lower_bound_unbounded(t, rng)?,
            SequenceSpec::DegenerateCovariates => gen_lower_bound_degenerate_covariates(t, rng)?,
            _ => unreachable!("fixed sequences are prepared in Scenario::new"),
        };
        Ok(Cow::Owned(seq))
    }

    pub fn realize(&self, rep: u64, need_summary: bool) -> Result<Realization<'_>> {
        let mut rng = RngStream::new(self.config.base_seed, rep);
        let seq = self.sequence(&mut rng)?;
        let want_summary = need_summary || self.config.design == DesignKind::OracleNeyman;
        let summary = match (&self.fixed, &seq) {
            (Some((_, s)), _) => s.as_ref().map(Cow::Borrowed),
            (None, seq) => summary_for(seq, want_summary)?.map(Cow::Owned),
        };
        let log = match self.config.design {
            DesignKind::SigmoidFtrl => {
                let cfg = DesignConfig::new(seq.len(), seq.dim(), self.config.sigmoid())?
                    .with_p_floor(self.config.p_floor)?;
                design::run(&cfg, &seq, &mut rng)?
            }
            DesignKind::BernoulliHalf => run_baseline(&BaselineKind::BernoulliHalf, &seq, &mut rng)?,
            DesignKind::OracleNeyman => {
                let s = summary.as_deref().expect("oracle summary computed for the oracle design");
                run_baseline(&BaselineKind::OracleNeyman(s.clone()), &seq, &mut rng)?
            }
        };
        Ok(Realization { seq, summary, log })
    }

    /// Runs `f` for replications `0..reps` on the given pool, returning
    /// results in replication order. The first failing replication (by
    /// index) determines the error.
    pub fn replicate<R, F>(&self, pool: &rayon::ThreadPool, reps: u64, f: F) -> Result<Vec<R>>
    where
        R: Send,
        F: Fn(u64) -> Result<R> + Sync + Send,
    {
        let all: Vec<Result<R>> = pool.install(|| (0..reps).into_par_iter().map(&f).collect());
        all.into_iter().collect()
    }
}

fn summary_for(seq: &PotentialOutcomeSequence, required: bool) -> Result<Option<OracleSummary>> {
    match oracle::summarize(seq) {
        Ok(s) => Ok(Some(s)),
        Err(e) if required => Err(e.into()),
        Err(_) => Ok(None),
    }
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start {workers} workers: {e}")))
}

/// Mean and standard error of the mean.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `ys` against `xs`, with its standard error when
/// at least three points are given.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> Option<(f64, Option<f64>)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let se = (n > 2).then(|| {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    });
    Some((slope, se))
}
