//! Run configuration: a flat `key=value` file with `[model]`, `[scenario]`
//! and `[io]` sections, overridden field-by-field by command-line flags
//! carrying the same names.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ovbs_core::datagen::ScenarioSpec;
use ovbs_core::model::{HyperParams, DEFAULT_GAMMA_HYPER};

use crate::error::CliError;

pub const DEFAULT_LAMBDA: f64 = 0.98;
pub const DEFAULT_NSRE_EVERY: u64 = 100;
pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-3;
pub const DEFAULT_BATCH_CAP: usize = 10_000_000;
pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamFormat {
    Csv,
    Binary,
}

impl StreamFormat {
    fn parse(v: &str) -> Result<Self, String> {
        match v {
            "csv" => Ok(Self::Csv),
            "ovbd" | "binary" => Ok(Self::Binary),
            other => Err(format!("unknown stream format `{other}` (expected csv or ovbd)")),
        }
    }
}

/// Scenario keys; completeness is checked only when a command needs them.
#[derive(Debug, Clone, Default)]
pub struct ScenarioConfig {
    pub k: Option<usize>,
    pub true_rank: Option<usize>,
    pub n_samples: Option<usize>,
    pub beta_true: Option<f64>,
    pub pi: Option<f64>,
    pub change_at: Option<usize>,
    pub subspace_sparsity: Option<f64>,
    pub noiseless: Option<bool>,
}

impl ScenarioConfig {
    pub fn is_empty(&self) -> bool {
        self.k.is_none()
            && self.true_rank.is_none()
            && self.n_samples.is_none()
            && self.beta_true.is_none()
            && self.pi.is_none()
            && self.change_at.is_none()
            && self.subspace_sparsity.is_none()
            && self.noiseless.is_none()
    }

    /// Materializes a full scenario spec, demanding the required keys.
    pub fn to_spec(&self, seed: u64) -> Result<ScenarioSpec, CliError> {
        let k = self.k.ok_or_else(|| CliError::Config("scenario requires k".into()))?;
        let r = self
            .true_rank
            .ok_or_else(|| CliError::Config("scenario requires true-rank".into()))?;
        let n_samples = self
            .n_samples
            .ok_or_else(|| CliError::Config("scenario requires n-samples".into()))?;
        let spec = ScenarioSpec {
            k,
            r,
            n_samples,
            beta_true: self.beta_true.unwrap_or(1e3),
            pi: self.pi.unwrap_or(1.0),
            change_at: self.change_at,
            subspace_sparsity: self.subspace_sparsity.unwrap_or(0.0),
            noiseless: self.noiseless.unwrap_or(false),
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Fully merged run configuration (defaults, then config file, then flags).
#[derive(Debug, Clone)]
pub struct RunConfig {
    // [model]
    pub rank_max: Option<usize>,
    pub lambda: f64,
    pub sparse_subspace: bool,
    pub seed: u64,
    pub mu: f64,
    pub nu: f64,
    pub psi: f64,
    pub xi: f64,
    pub kappa: f64,
    pub theta: f64,
    pub inner_sweeps: usize,
    pub rank_threshold: f64,
    // [scenario]
    pub scenario: ScenarioConfig,
    // [io]
    pub stream: Option<PathBuf>,
    pub stream_out: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub truth_out: Option<PathBuf>,
    pub metrics_out: Option<PathBuf>,
    pub checkpoint_out: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub completed_in: Option<PathBuf>,
    pub completed_out: Option<PathBuf>,
    pub checkpoint_in: Option<PathBuf>,
    pub report_out: Option<PathBuf>,
    pub checkpoint_every: Option<u64>,
    pub nsre_every: u64,
    pub metrics: Vec<String>,
    pub stream_format: StreamFormat,
    pub batch_cap: usize,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rank_max: None,
            lambda: DEFAULT_LAMBDA,
            sparse_subspace: false,
            seed: 0,
            mu: DEFAULT_GAMMA_HYPER,
            nu: DEFAULT_GAMMA_HYPER,
            psi: DEFAULT_GAMMA_HYPER,
            xi: DEFAULT_GAMMA_HYPER,
            kappa: DEFAULT_GAMMA_HYPER,
            theta: DEFAULT_GAMMA_HYPER,
            inner_sweeps: 1,
            rank_threshold: DEFAULT_RANK_THRESHOLD,
            scenario: ScenarioConfig::default(),
            stream: None,
            stream_out: None,
            truth: None,
            truth_out: None,
            metrics_out: None,
            checkpoint_out: None,
            resume: None,
            completed_in: None,
            completed_out: None,
            checkpoint_in: None,
            report_out: None,
            checkpoint_every: None,
            nsre_every: DEFAULT_NSRE_EVERY,
            metrics: vec!["nraee".into(), "nsre".into(), "rank".into()],
            stream_format: StreamFormat::Csv,
            batch_cap: DEFAULT_BATCH_CAP,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
        }
    }
}

impl RunConfig {
    /// Model hyperparameters as configured.
    pub fn hyper_params(&self) -> Result<HyperParams, CliError> {
        let hp = HyperParams {
            mu: self.mu,
            nu: self.nu,
            psi: self.psi,
            xi: self.xi,
            kappa: self.kappa,
            theta: self.theta,
            lambda: self.lambda,
            sparse_subspace: self.sparse_subspace,
        };
        hp.validate()?;
        Ok(hp)
    }

    /// Working rank: explicit `rank-max`, or twice the scenario's true rank.
    pub fn rank_max_or_default(&self) -> Result<usize, CliError> {
        if let Some(l) = self.rank_max {
            return Ok(l);
        }
        if let Some(r) = self.scenario.true_rank {
            return Ok(2 * r);
        }
        Err(CliError::Config(
            "rank-max is required (no embedded scenario to derive it from)".into(),
        ))
    }

    pub fn metric_enabled(&self, name: &str) -> bool {
        self.metrics.iter().any(|m| m == name)
    }

    /// Applies one `key=value` pair from the given section.
    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<(), String> {
        let parse_usize = |v: &str| v.parse::<usize>().map_err(|e| e.to_string());
        let parse_u64 = |v: &str| v.parse::<u64>().map_err(|e| e.to_string());
        let parse_f64 = |v: &str| v.parse::<f64>().map_err(|e| e.to_string());
        let parse_bool = |v: &str| match v {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(format!("expected boolean, got `{other}`")),
        };
        match (section, key) {
            ("model", "rank-max") => self.rank_max = Some(parse_usize(value)?),
            ("model", "lambda") => self.lambda = parse_f64(value)?,
            ("model", "sparse-subspace") => self.sparse_subspace = parse_bool(value)?,
            ("model", "seed") => self.seed = parse_u64(value)?,
            ("model", "mu") => self.mu = parse_f64(value)?,
            ("model", "nu") => self.nu = parse_f64(value)?,
            ("model", "psi") => self.psi = parse_f64(value)?,
            ("model", "xi") => self.xi = parse_f64(value)?,
            ("model", "kappa") => self.kappa = parse_f64(value)?,
            ("model", "theta") => self.theta = parse_f64(value)?,
            ("model", "inner-sweeps") => self.inner_sweeps = parse_usize(value)?,
            ("model", "rank-threshold") => self.rank_threshold = parse_f64(value)?,
            ("scenario", "k") => self.scenario.k = Some(parse_usize(value)?),
            ("scenario", "true-rank") => self.scenario.true_rank = Some(parse_usize(value)?),
            ("scenario", "n-samples") => self.scenario.n_samples = Some(parse_usize(value)?),
            ("scenario", "beta-true") => self.scenario.beta_true = Some(parse_f64(value)?),
            ("scenario", "pi") => self.scenario.pi = Some(parse_f64(value)?),
            ("scenario", "change-at") => self.scenario.change_at = Some(parse_usize(value)?),
            ("scenario", "subspace-sparsity") => {
                self.scenario.subspace_sparsity = Some(parse_f64(value)?)
            }
            ("scenario", "noiseless") => self.scenario.noiseless = Some(parse_bool(value)?),
            ("io", "stream") => self.stream = Some(PathBuf::from(value)),
            ("io", "stream-out") => self.stream_out = Some(PathBuf::from(value)),
            ("io", "truth") => self.truth = Some(PathBuf::from(value)),
            ("io", "truth-out") => self.truth_out = Some(PathBuf::from(value)),
            ("io", "metrics-out") => self.metrics_out = Some(PathBuf::from(value)),
            ("io", "checkpoint-out") => self.checkpoint_out = Some(PathBuf::from(value)),
            ("io", "resume") => self.resume = Some(PathBuf::from(value)),
            ("io", "completed") => self.completed_in = Some(PathBuf::from(value)),
            ("io", "completed-out") => self.completed_out = Some(PathBuf::from(value)),
            ("io", "checkpoint") => self.checkpoint_in = Some(PathBuf::from(value)),
            ("io", "report-out") => self.report_out = Some(PathBuf::from(value)),
            ("io", "checkpoint-every") => self.checkpoint_every = Some(parse_u64(value)?),
            ("io", "nsre-every") => self.nsre_every = parse_u64(value)?,
            ("io", "metrics") => {
                self.metrics = value.split(',').map(|s| s.trim().to_string()).collect()
            }
            ("io", "stream-format") => self.stream_format = StreamFormat::parse(value)?,
            ("io", "batch-cap") => self.batch_cap = parse_usize(value)?,
            ("io", "max-iters") => self.max_iters = parse_usize(value)?,
            ("io", "tol") => self.tol = parse_f64(value)?,
            _ => return Err(format!("unknown key `{key}` in section [{section}]")),
        }
        Ok(())
    }

    /// Loads and applies a config file on top of the current values.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut section = String::from("model");
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                match name {
                    "model" | "scenario" | "io" => section = name.to_string(),
                    other => {
                        return Err(CliError::Config(format!(
                            "{}:{}: unknown section [{other}]",
                            path.display(),
                            lineno + 1
                        )))
                    }
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "{}:{}: expected key=value, got `{line}`",
                    path.display(),
                    lineno + 1
                )));
            };
            self.apply(&section, key.trim(), value.trim()).map_err(|msg| {
                CliError::Config(format!("{}:{}: {msg}", path.display(), lineno + 1))
            })?;
        }
        Ok(())
    }

    /// Applies flag overrides expressed as (section, key, value) triples.
    pub fn apply_overrides(
        &mut self,
        overrides: &BTreeMap<(&'static str, &'static str), String>,
    ) -> Result<(), CliError> {
        for (&(section, key), value) in overrides {
            self.apply(section, key, value)
                .map_err(|msg| CliError::Config(format!("--{key}: {msg}")))?;
        }
        Ok(())
    }
}
