//! Command-line surface for the subspace tracking toolkit: scenario
//! simulation, streaming tracking, batch fitting and metric evaluation,
//! with deterministic file formats and a `key=value` config file.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(
    name = "ovbs",
    about = "Streaming subspace tracking and online matrix completion over partially observed data",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic stream and its ground-truth file.
    Simulate(CommonArgs),
    /// Run the streaming tracker over a stream file.
    Track(CommonArgs),
    /// Fit the batch engine over a whole stream held in memory.
    BatchFit(CommonArgs),
    /// Compute metrics from completed/checkpoint files against ground truth.
    Evaluate(CommonArgs),
}

/// One flag per config key; flags override the config file.
#[derive(Args, Default)]
pub struct CommonArgs {
    /// Config file with [model], [scenario] and [io] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,

    // [model]
    #[arg(long)]
    pub rank_max: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub sparse_subspace: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub psi: Option<f64>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub inner_sweeps: Option<usize>,
    #[arg(long)]
    pub rank_threshold: Option<f64>,

    // [scenario]
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub true_rank: Option<usize>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    #[arg(long)]
    pub beta_true: Option<f64>,
    #[arg(long)]
    pub pi: Option<f64>,
    #[arg(long)]
    pub change_at: Option<usize>,
    #[arg(long)]
    pub subspace_sparsity: Option<f64>,
    #[arg(long)]
    pub noiseless: Option<bool>,

    // [io]
    #[arg(long)]
    pub stream: Option<PathBuf>,
    #[arg(long)]
    pub stream_out: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_out: Option<PathBuf>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub completed: Option<PathBuf>,
    #[arg(long)]
    pub completed_out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub report_out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long)]
    pub nsre_every: Option<u64>,
    /// Comma-separated metric selection (nraee,nsre,rank).
    #[arg(long)]
    pub metrics: Option<String>,
    /// Stream output format: csv or ovbd.
    #[arg(long)]
    pub stream_format: Option<String>,
    #[arg(long)]
    pub batch_cap: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

impl CommonArgs {
    /// Merges defaults, the config file, and these flags into a run config.
    pub fn build_config(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        let mut overrides: BTreeMap<(&'static str, &'static str), String> = BTreeMap::new();
        let mut set = |section, key, value: Option<String>| {
            if let Some(v) = value {
                overrides.insert((section, key), v);
            }
        };
        let path_str = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());

        set("model", "rank-max", self.rank_max.map(|v| v.to_string()));
        set("model", "lambda", self.lambda.map(|v| v.to_string()));
        set("model", "sparse-subspace", self.sparse_subspace.map(|v| v.to_string()));
        set("model", "seed", self.seed.map(|v| v.to_string()));
        set("model", "mu", self.mu.map(|v| v.to_string()));
        set("model", "nu", self.nu.map(|v| v.to_string()));
        set("model", "psi", self.psi.map(|v| v.to_string()));
        set("model", "xi", self.xi.map(|v| v.to_string()));
        set("model", "kappa", self.kappa.map(|v| v.to_string()));
        set("model", "theta", self.theta.map(|v| v.to_string()));
        set("model", "inner-sweeps", self.inner_sweeps.map(|v| v.to_string()));
        set("model", "rank-threshold", self.rank_threshold.map(|v| v.to_string()));

        set("scenario", "k", self.k.map(|v| v.to_string()));
        set("scenario", "true-rank", self.true_rank.map(|v| v.to_string()));
        set("scenario", "n-samples", self.n_samples.map(|v| v.to_string()));
        set("scenario", "beta-true", self.beta_true.map(|v| v.to_string()));
        set("scenario", "pi", self.pi.map(|v| v.to_string()));
        set("scenario", "change-at", self.change_at.map(|v| v.to_string()));
        set(
            "scenario",
            "subspace-sparsity",
            self.subspace_sparsity.map(|v| v.to_string()),
        );
        set("scenario", "noiseless", self.noiseless.map(|v| v.to_string()));

        set("io", "stream", path_str(&self.stream));
        set("io", "stream-out", path_str(&self.stream_out));
        set("io", "truth", path_str(&self.truth));
        set("io", "truth-out", path_str(&self.truth_out));
        set("io", "metrics-out", path_str(&self.metrics_out));
        set("io", "checkpoint-out", path_str(&self.checkpoint_out));
        set("io", "resume", path_str(&self.resume));
        set("io", "completed", path_str(&self.completed));
        set("io", "completed-out", path_str(&self.completed_out));
        set("io", "checkpoint", path_str(&self.checkpoint));
        set("io", "report-out", path_str(&self.report_out));
        set("io", "checkpoint-every", self.checkpoint_every.map(|v| v.to_string()));
        set("io", "nsre-every", self.nsre_every.map(|v| v.to_string()));
        set("io", "metrics", self.metrics.clone());
        set("io", "stream-format", self.stream_format.clone());
        set("io", "batch-cap", self.batch_cap.map(|v| v.to_string()));
        set("io", "max-iters", self.max_iters.map(|v| v.to_string()));
        set("io", "tol", self.tol.map(|v| v.to_string()));

        config.apply_overrides(&overrides)?;
        Ok(config)
    }
}

/// Runs one parsed command; the caller maps the error to an exit code.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => commands::cmd_simulate(&args.build_config()?),
        Command::Track(args) => {
            let summary = commands::cmd_track(&args.build_config()?)?;
            println!("samples_processed={}", summary.samples_processed);
            if let Some(v) = summary.nraee {
                println!("nraee={v}");
            }
            if let Some(v) = summary.nsre {
                println!("nsre={v}");
            }
            println!("effective_rank={}", summary.effective_rank);
            Ok(())
        }
        Command::BatchFit(args) => commands::cmd_batch_fit(&args.build_config()?),
        Command::Evaluate(args) => {
            let entries = commands::cmd_evaluate(&args.build_config()?)?;
            for (key, value) in entries {
                println!("{key}={value}");
            }
            Ok(())
        }
    }
}
