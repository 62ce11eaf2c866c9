//! Experiment configuration: a flat `key = value` file, overridden by flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use neyman_core::design::DEFAULT_P_FLOOR;
use neyman_core::{SigmoidKind, SigmoidSpec, StationaryParams};

use crate::error::{config_err, HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    SweepRegret,
    Coverage,
    VerifySigmoid,
    CheckSequence,
    Identities,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Simulate,
        Command::SweepRegret,
        Command::Coverage,
        Command::VerifySigmoid,
        Command::CheckSequence,
        Command::Identities,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::SweepRegret => "sweep-regret",
            Command::Coverage => "coverage",
            Command::VerifySigmoid => "verify-sigmoid",
            Command::CheckSequence => "check-sequence",
            Command::Identities => "identities",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('_', "-");
        Command::ALL
            .into_iter()
            .find(|c| c.name() == norm)
            .ok_or_else(|| HarnessError::Config(format!("unknown command `{s}`")))
    }
}

/// Where the potential outcomes come from.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceSpec {
    /// The stationary benchmark family; `horizon` is filled in per `T`.
    Stationary(StationaryParams),
    /// Randomized ensembles, redrawn in every replication.
    LowerBoundMain,
    LowerBoundUnbounded,
    DegenerateCovariates,
    File(PathBuf),
}

impl SequenceSpec {
    /// Ensembles draw a fresh sequence from each replication's stream.
    pub fn is_ensemble(&self) -> bool {
        matches!(
            self,
            SequenceSpec::LowerBoundMain | SequenceSpec::LowerBoundUnbounded | SequenceSpec::DegenerateCovariates
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    SigmoidFtrl,
    BernoulliHalf,
    OracleNeyman,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub sequence: SequenceSpec,
    pub design: DesignKind,
    /// Families to use; the design commands take the first.
    pub sigmoids: Vec<SigmoidSpec>,
    pub p_floor: f64,
    pub horizons: Vec<usize>,
    pub replications: u64,
    pub base_seed: u64,
    pub output_path: Option<PathBuf>,
    pub workers: usize,
    pub alphas: Vec<f64>,
    pub json: bool,
    pub gamma0: f64,
    pub c2: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    /// Multiplies the leverage in the FTRL identity check; 1 leaves it intact.
    pub leverage_perturbation: f64,
    /// `check-sequence` writes the (first) sequence here when set.
    pub save_sequence: Option<PathBuf>,
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub horizons: Option<Vec<usize>>,
    pub replications: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub json: bool,
}

const KEYS: &[&str] = &[
    "command",
    "sequence",
    "dim",
    "noise_sd",
    "effect",
    "rho",
    "noise_ratio",
    "r_cap",
    "design",
    "sigmoid",
    "b1",
    "b2",
    "b3",
    "p_floor",
    "T",
    "reps",
    "seed",
    "out",
    "workers",
    "alpha",
    "format",
    "gamma0",
    "c2",
    "grid_min",
    "grid_max",
    "grid_points",
    "leverage_perturbation",
    "save_sequence",
];

const STATIONARY_KEYS: &[&str] = &["dim", "noise_sd", "effect", "rho", "noise_ratio", "r_cap"];

/// Reads `key = value` pairs; sections are accepted and flattened.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let ini = ini::Ini::load_from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut out = BTreeMap::new();
    for (_, props) in ini.iter() {
        for (k, v) in props.iter() {
            if !KEYS.contains(&k) {
                return config_err(format!("unknown key `{k}`"));
            }
            if out.insert(k.to_string(), v.trim().to_string()).is_some() {
                return config_err(format!("key `{k}` given twice"));
            }
        }
    }
    Ok(out)
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    raw.trim().parse().map_err(|e| HarnessError::Config(format!("bad value `{raw}` for `{key}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    raw.split([',', ' ']).filter(|s| !s.trim().is_empty()).map(|s| parse_value(key, s)).collect()
}

impl ExperimentConfig {
    /// Builds a configuration from file text (if any) and flag overrides.
    ///
    /// Relative paths in the file resolve against `base_dir`.
    pub fn from_parts(command: Command, text: Option<&str>, base_dir: &Path, overrides: &Overrides) -> Result<Self> {
        let mut kv = match text {
            Some(t) => parse_pairs(t)?,
            None => BTreeMap::new(),
        };
        if let Some(c) = kv.remove("command") {
            let in_file: Command = c.parse()?;
            if in_file != command {
                return config_err(format!("file is for `{in_file}` but `{command}` was requested"));
            }
        }
        let get = |k: &str| kv.get(k).map(String::as_str);
        let num = |k: &str, default: f64| -> Result<f64> { get(k).map_or(Ok(default), |v| parse_value(k, v)) };

        let resolve = |raw: &str| {
            let p = PathBuf::from(raw);
            if p.is_relative() {
                base_dir.join(p)
            } else {
                p
            }
        };

        let seq_name = get("sequence").unwrap_or("stationary");
        let sequence = match seq_name {
            "stationary" => {
                let mut p = StationaryParams::new(0, 2);
                if let Some(d) = get("dim") {
                    p.dim = parse_value("dim", d)?;
                }
                p.noise_sd = num("noise_sd", p.noise_sd)?;
                p.effect = num("effect", p.effect)?;
                p.rho_target = num("rho", p.rho_target)?;
                p.noise_ratio = num("noise_ratio", p.noise_ratio)?;
                p.r_cap = num("r_cap", p.r_cap)?;
                SequenceSpec::Stationary(p)
            }
            "lower_bound_main" => SequenceSpec::LowerBoundMain,
            "lower_bound_unbounded" => SequenceSpec::LowerBoundUnbounded,
            "degenerate_covariates" => SequenceSpec::DegenerateCovariates,
            other => match other.strip_prefix("file:") {
                Some(path) => SequenceSpec::File(resolve(path.trim())),
                None => return config_err(format!("unknown sequence `{other}`")),
            },
        };
        if !matches!(sequence, SequenceSpec::Stationary(_)) {
            if let Some(k) = STATIONARY_KEYS.iter().find(|k| kv.contains_key(**k)) {
                return config_err(format!("`{k}` applies only to the stationary sequence"));
            }
        }

        let design = match get("design").unwrap_or("sigmoid_ftrl") {
            "sigmoid_ftrl" => DesignKind::SigmoidFtrl,
            "bernoulli_half" => DesignKind::BernoulliHalf,
            "oracle_neyman" => DesignKind::OracleNeyman,
            other => return config_err(format!("unknown design `{other}`")),
        };

        let both = vec![SigmoidSpec::arctan(), SigmoidSpec::algebraic()];
        let mut sigmoids = match get("sigmoid") {
            None if command == Command::VerifySigmoid => both,
            None => vec![SigmoidSpec::arctan()],
            Some("both") if command == Command::VerifySigmoid => both,
            Some("both") => return config_err("`sigmoid = both` is only meaningful for verify-sigmoid"),
            Some(s) => {
                let kind: SigmoidKind = s.parse().map_err(|e| HarnessError::Config(format!("{e}")))?;
                vec![SigmoidSpec::of(kind)]
            }
        };
        let custom = ["b1", "b2", "b3"].map(get);
        if custom.iter().any(Option::is_some) {
            if sigmoids.len() != 1 {
                return config_err("custom constants b1, b2, b3 need a single `sigmoid` family");
            }
            let s = sigmoids[0];
            let b = |i: usize, d: f64| custom[i].map_or(Ok(d), |v| parse_value(["b1", "b2", "b3"][i], v));
            sigmoids[0] = s.with_constants(b(0, s.b1())?, b(1, s.b2())?, b(2, s.b3())?);
        }

        let mut cfg = ExperimentConfig {
            command,
            sequence,
            design,
            sigmoids,
            p_floor: num("p_floor", DEFAULT_P_FLOOR)?,
            horizons: match get("T") {
                Some(v) => parse_list("T", v)?,
                None => Vec::new(),
            },
            replications: get("reps").map_or(Ok(100), |v| parse_value("reps", v))?,
            base_seed: get("seed").map_or(Ok(0), |v| parse_value("seed", v))?,
            output_path: get("out").map(resolve),
            workers: get("workers").map_or(Ok(1), |v| parse_value("workers", v))?,
            alphas: match get("alpha") {
                Some(v) => parse_list("alpha", v)?,
                None => vec![0.05],
            },
            json: match get("format").unwrap_or("csv") {
                "csv" => false,
                "json" => true,
                other => return config_err(format!("unknown format `{other}`")),
            },
            gamma0: num("gamma0", 1.0)?,
            c2: num("c2", 10.0)?,
            grid_min: num("grid_min", -50.0)?,
            grid_max: num("grid_max", 50.0)?,
            grid_points: get("grid_points").map_or(Ok(10_001), |v| parse_value("grid_points", v))?,
            leverage_perturbation: num("leverage_perturbation", 1.0)?,
            save_sequence: get("save_sequence").map(resolve),
        };

        if let Some(h) = &overrides.horizons {
            cfg.horizons.clone_from(h);
        }
        if let Some(r) = overrides.replications {
            cfg.replications = r;
        }
        if let Some(s) = overrides.seed {
            cfg.base_seed = s;
        }
        if let Some(o) = &overrides.out {
            cfg.output_path = Some(o.clone());
        }
        if let Some(w) = overrides.workers {
            cfg.workers = w;
        }
        cfg.json |= overrides.json;
        cfg.validate()?;
        Ok(cfg)
    }

    /// A configuration with every default, as if from an empty file.
    pub fn defaults(command: Command) -> Result<Self> {
        Self::from_parts(command, None, Path::new("."), &Overrides::default())
    }

    /// Reads `path` and applies `overrides`.
    pub fn load(command: Command, path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_parts(command, Some(&text), base, overrides)
    }

    pub fn validate(&mut self) -> Result<()> {
        if self.replications == 0 {
            return config_err("reps must be at least 1");
        }
        if self.workers == 0 {
            return config_err("workers must be at least 1");
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return config_err(format!("alpha must lie in (0, 1), got {a}"));
        }
        if self.alphas.is_empty() {
            return config_err("alpha list is empty");
        }
        if !(self.p_floor > 0.0 && self.p_floor < 0.5) {
            return config_err("p_floor must lie in (0, 1/2)");
        }
        if !(self.grid_min < self.grid_max && self.grid_points >= 2) {
            return config_err("sigmoid grid needs grid_min < grid_max and at least two points");
        }
        if !(self.gamma0 > 0.0 && self.c2 > 0.0) {
            return config_err("gamma0 and c2 must be positive");
        }
        if !(self.leverage_perturbation.is_finite() && self.leverage_perturbation > 0.0) {
            return config_err("leverage_perturbation must be positive");
        }
        if let SequenceSpec::Stationary(p) = &self.sequence {
            let mut probe = *p;
            probe.horizon = 1;
            probe.validate()?;
        }
        if self.command == Command::VerifySigmoid {
            return Ok(());
        }
        if self.sigmoids.len() != 1 {
            return config_err("design commands take a single sigmoid family");
        }
        if let SequenceSpec::File(path) = &self.sequence {
            let len = neyman_core::PotentialOutcomeSequence::load_csv(path)?.len();
            if self.horizons.is_empty() {
                self.horizons = vec![len];
            } else if self.horizons != [len] {
                return config_err(format!("T must be {len} (the file's length) or omitted"));
            }
        }
        if self.horizons.is_empty() {
            self.horizons = vec![200];
        }
        if self.horizons.contains(&0) {
            return config_err("every T must be positive");
        }
        if matches!(self.command, Command::SweepRegret) && self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return config_err("T list must be strictly ascending for sweeps");
        }
        let min_t = match self.sequence {
            SequenceSpec::LowerBoundMain | SequenceSpec::LowerBoundUnbounded | SequenceSpec::DegenerateCovariates => 2,
            _ => 1,
        };
        if let Some(t) = self.horizons.iter().find(|&&t| t < min_t) {
            return config_err(format!("this sequence needs T >= {min_t}, got {t}"));
        }
        if self.sequence == SequenceSpec::DegenerateCovariates {
            if let Some(t) = self.horizons.iter().find(|&&t| t % 2 == 1) {
                return config_err(format!("degenerate_covariates needs even T, got {t}"));
            }
        }
        if self.command == Command::Identities {
            if self.design != DesignKind::SigmoidFtrl {
                return config_err("identities check the adaptive design; set design = sigmoid_ftrl");
            }
            if let Some(t) = self.horizons.iter().find(|&&t| t > 200) {
                return config_err(format!("identities run O(T^2) oracles; keep T <= 200 (got {t})"));
            }
        }
        Ok(())
    }

    /// The sigmoid driving the design.
    pub fn sigmoid(&self) -> SigmoidSpec {
        self.sigmoids[0]
    }
}
