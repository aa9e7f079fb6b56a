//! Flat `key = value` experiment configuration.
//!
//! A config file holds one `key = value` pair per line; `#` starts a comment.
//! Command-line overrides use the same keys and win over the file. Unknown
//! keys and malformed values are rejected with the key name and line number.

use std::path::{Path, PathBuf};

use bregman_ot::adaptation::{CostMode, SolverKind};
use bregman_ot::Metric;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{origin}: unknown key {key:?}")]
    UnknownKey { key: String, origin: Origin },
    #[error("{origin}: invalid value {value:?} for {key}: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
        origin: Origin,
    },
    #[error("{origin}: expected `key = value`")]
    Malformed { origin: Origin },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Where a setting came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag,
}

impl std::fmt::Display for Origin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Flag => f.write_str("command line"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Convergence,
    Adaptation,
}

impl std::str::FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "convergence" => Ok(Experiment::Convergence),
            "adaptation" => Ok(Experiment::Adaptation),
            _ => Err("expected convergence or adaptation".into()),
        }
    }
}

/// Regularizer weights for one regularizer set, overriding the global ones.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EtaOverride {
    pub eta_c: Option<f64>,
    pub eta_t: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub alpha: f64,
    pub lambda: f64,
    pub eta_c: f64,
    pub eta_t: f64,
    /// Per-method weights: `class`, `time`, `class+time`.
    pub class_eta: EtaOverride,
    pub time_eta: EtaOverride,
    pub both_eta: EtaOverride,
    pub sinkhorn_tol: f64,
    pub sinkhorn_max_iters: usize,
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    pub warm_start: bool,
    /// Per-solver wall-clock budget of the convergence benchmark; 0 disables.
    pub wall_clock_budget_s: f64,
    pub source_n: usize,
    pub target_n: usize,
    pub eval_n: usize,
    pub n_steps: usize,
    pub step_deg: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub metric: Metric,
    pub runs: usize,
    pub output: PathBuf,
    pub solver: SolverKind,
    /// Restricts the adaptation experiment to one cost mode.
    pub cost_mode: Option<CostMode>,
    pub jobs: usize,
    /// Candidate weights for the validation grid search; empty disables it.
    pub grid: Vec<f64>,
    pub grid_runs: usize,
    pub k: usize,
    /// Score on the adaptation batch itself instead of a fresh draw.
    pub eval_on_batch: bool,
}

/// Every accepted key with its default and meaning, as shown by `--help`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("experiment", "adaptation", "convergence | adaptation"),
    ("alpha", "10", "forward-backward step size"),
    ("lambda", "0.5 (convergence) / 0.02 (adaptation)", "entropic weight"),
    ("eta_c", "0 (convergence) / 1 (adaptation)", "class group-lasso weight"),
    ("eta_t", "50", "temporal smoothness weight"),
    ("eta_c.class", "eta_c", "class weight of the class-only method"),
    ("eta_t.time", "eta_t", "temporal weight of the time-only method"),
    ("eta_c.class+time", "eta_c", "class weight of the combined method"),
    ("eta_t.class+time", "eta_t", "temporal weight of the combined method"),
    ("sinkhorn_tol", "1e-9", "inner marginal residual tolerance"),
    ("sinkhorn_max_iters", "1000", "inner iteration cap"),
    ("outer_tol", "1e-7 (convergence) / 1e-5 (adaptation)", "relative change stop"),
    ("max_outer_iters", "100000 (convergence) / 100 (adaptation)", "outer iteration cap"),
    ("warm_start", "false (convergence) / true (adaptation)", "reuse inner potentials"),
    ("wall_clock_budget_s", "30", "per-solver time budget, 0 = none"),
    ("source_n", "5000 (convergence) / 500 (adaptation)", "source samples"),
    ("target_n", "1000 (convergence) / 50 (adaptation)", "samples per target"),
    ("eval_n", "1000", "evaluation samples per target"),
    ("n_steps", "10", "rotation steps after the unrotated first target"),
    ("step_deg", "18", "rotation per step in degrees"),
    ("noise_sigma", "0.05", "two-moons noise std"),
    ("seed", "0", "master seed"),
    ("metric", "euclidean", "euclidean | sqeuclidean"),
    ("runs", "1 (convergence) / 10 (adaptation)", "independent seeded runs"),
    ("output", "convergence.csv / adaptation.csv", "CSV output path"),
    ("solver", "fb", "fb | cgs (adaptation)"),
    ("cost_mode", "both", "seq | static (adaptation; default runs both)"),
    ("jobs", "1", "parallel runs"),
    ("grid", "", "comma-separated candidate weights for validation tuning"),
    ("grid_runs", "3", "validation runs per grid candidate"),
    ("k", "1", "nearest neighbours of the classifier"),
    ("eval_on_batch", "false", "score on the adaptation batch"),
];

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let adaptation = experiment == Experiment::Adaptation;
        let pick = |conv, adapt| if adaptation { adapt } else { conv };
        Self {
            experiment,
            alpha: 10.0,
            lambda: pick(0.5, 0.02),
            eta_c: pick(0.0, 1.0),
            eta_t: 50.0,
            class_eta: EtaOverride::default(),
            time_eta: EtaOverride::default(),
            both_eta: EtaOverride::default(),
            sinkhorn_tol: 1e-9,
            sinkhorn_max_iters: 1000,
            outer_tol: pick(1e-7, 1e-5),
            max_outer_iters: if adaptation { 100 } else { 100_000 },
            warm_start: adaptation,
            wall_clock_budget_s: 30.0,
            source_n: if adaptation { 500 } else { 5000 },
            target_n: if adaptation { 50 } else { 1000 },
            eval_n: 1000,
            n_steps: 10,
            step_deg: 18.0,
            noise_sigma: 0.05,
            seed: 0,
            metric: Metric::Euclidean,
            runs: if adaptation { 10 } else { 1 },
            output: PathBuf::from(if adaptation {
                "adaptation.csv"
            } else {
                "convergence.csv"
            }),
            solver: SolverKind::Fb,
            cost_mode: None,
            jobs: 1,
            grid: Vec::new(),
            grid_runs: 3,
            k: 1,
            eval_on_batch: false,
        }
    }

    fn set(&mut self, key: &str, value: &str, origin: &Origin) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(value: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value.parse::<T>().map_err(|e| e.to_string())
        }
        fn flag(value: &str) -> Result<bool, String> {
            match value {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err("expected true or false".into()),
            }
        }
        let result: Result<(), String> = (|| {
            match key {
                "experiment" => self.experiment = parse(value)?,
                "alpha" => self.alpha = parse(value)?,
                "lambda" => self.lambda = parse(value)?,
                "eta_c" => self.eta_c = parse(value)?,
                "eta_t" => self.eta_t = parse(value)?,
                "eta_c.class" => self.class_eta.eta_c = Some(parse(value)?),
                "eta_t.time" => self.time_eta.eta_t = Some(parse(value)?),
                "eta_c.class+time" => self.both_eta.eta_c = Some(parse(value)?),
                "eta_t.class+time" => self.both_eta.eta_t = Some(parse(value)?),
                "sinkhorn_tol" => self.sinkhorn_tol = parse(value)?,
                "sinkhorn_max_iters" => self.sinkhorn_max_iters = parse(value)?,
                "outer_tol" => self.outer_tol = parse(value)?,
                "max_outer_iters" => self.max_outer_iters = parse(value)?,
                "warm_start" => self.warm_start = flag(value)?,
                "wall_clock_budget_s" => self.wall_clock_budget_s = parse(value)?,
                "source_n" => self.source_n = parse(value)?,
                "target_n" => self.target_n = parse(value)?,
                "eval_n" => self.eval_n = parse(value)?,
                "n_steps" => self.n_steps = parse(value)?,
                "step_deg" => self.step_deg = parse(value)?,
                "noise_sigma" => self.noise_sigma = parse(value)?,
                "seed" => self.seed = parse(value)?,
                "metric" => self.metric = parse(value)?,
                "runs" => self.runs = parse(value)?,
                "output" => self.output = PathBuf::from(value),
                "solver" => self.solver = parse(value)?,
                "cost_mode" => {
                    self.cost_mode = match value {
                        "both" | "" => None,
                        other => Some(parse(other)?),
                    }
                }
                "jobs" => self.jobs = parse(value)?,
                "grid" => {
                    self.grid = value
                        .split(',')
                        .map(str::trim)
                        .filter(|v| !v.is_empty())
                        .map(parse::<f64>)
                        .collect::<Result<_, _>>()?
                }
                "grid_runs" => self.grid_runs = parse(value)?,
                "k" => self.k = parse(value)?,
                "eval_on_batch" => self.eval_on_batch = flag(value)?,
                _ => unreachable!("keys are checked before assignment"),
            }
            Ok(())
        })();
        result.map_err(|reason| ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason,
            origin: origin.clone(),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("source_n", self.source_n),
            ("target_n", self.target_n),
            ("eval_n", self.eval_n),
            ("runs", self.runs),
            ("jobs", self.jobs),
            ("sinkhorn_max_iters", self.sinkhorn_max_iters),
            ("max_outer_iters", self.max_outer_iters),
            ("grid_runs", self.grid_runs),
            ("k", self.k),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::Invalid(format!("{name} must be positive")));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("lambda", self.lambda),
            ("sinkhorn_tol", self.sinkhorn_tol),
            ("outer_tol", self.outer_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        let mut etas = vec![self.eta_c, self.eta_t];
        for o in [self.class_eta, self.time_eta, self.both_eta] {
            etas.extend(o.eta_c.into_iter().chain(o.eta_t));
        }
        etas.extend(&self.grid);
        if etas.into_iter().any(|v| !(v >= 0.0 && v.is_finite())) {
            return Err(ConfigError::Invalid(
                "regularizer weights must be nonnegative".into(),
            ));
        }
        if !(self.wall_clock_budget_s >= 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(ConfigError::Invalid(
                "budget and noise must be nonnegative".into(),
            ));
        }
        if self.source_n < 2 || self.target_n < 2 || self.eval_n < 2 {
            return Err(ConfigError::Invalid(
                "two-moons clouds need at least 2 samples".into(),
            ));
        }
        if self.k > self.source_n {
            return Err(ConfigError::Invalid("k exceeds source_n".into()));
        }
        Ok(())
    }
}

fn is_known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

/// Splits config text into `(key, value, line)` triples.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String, usize)>, ConfigError> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Malformed {
                origin: Origin::Line(line),
            });
        };
        let key = key.trim();
        if !is_known(key) {
            return Err(ConfigError::UnknownKey {
                key: key.to_string(),
                origin: Origin::Line(line),
            });
        }
        pairs.push((key.to_string(), value.trim().to_string(), line));
    }
    Ok(pairs)
}

/// Merges file settings with flag overrides (flags win) on top of the
/// defaults of the selected experiment.
pub fn parse_config(
    file_text: Option<&str>,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig, ConfigError> {
    let file_pairs = match file_text {
        Some(text) => parse_pairs(text)?,
        None => Vec::new(),
    };
    for (key, _) in overrides {
        if !is_known(key) {
            return Err(ConfigError::UnknownKey {
                key: key.clone(),
                origin: Origin::Flag,
            });
        }
    }
    // The experiment picks the defaults, so resolve it first.
    let mut experiment = Experiment::Adaptation;
    let settings = file_pairs
        .iter()
        .map(|(k, v, line)| (k.as_str(), v.as_str(), Origin::Line(*line)))
        .chain(overrides.iter().map(|(k, v)| (k.as_str(), v.as_str(), Origin::Flag)));
    for (key, value, origin) in settings.clone() {
        if key == "experiment" {
            experiment = value.parse().map_err(|reason| ConfigError::InvalidValue {
                key: key.into(),
                value: value.into(),
                reason,
                origin,
            })?;
        }
    }
    let mut config = ExperimentConfig::defaults(experiment);
    for (key, value, origin) in settings {
        config.set(key, value, &origin)?;
    }
    config.validate()?;
    Ok(config)
}

pub fn load_config(
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig, ConfigError> {
    let text = match path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.to_path_buf(),
            source,
        })?),
        None => None,
    };
    parse_config(text.as_deref(), overrides)
}
