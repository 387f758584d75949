//! `track`: run the streaming tracker over a stream file, emitting metric
//! traces, periodic checkpoints, reconstructions, and a summary report.
//!
//! Memory is bounded independently of the stream length: samples, clean
//! rows and reconstructions all move through one row at a time.

use ovbs_core::metrics::{nsre, MetricTrace, NraeeAccumulator};
use ovbs_core::model::ModelDims;
use ovbs_core::online::TrackerState;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::formats::checkpoint;
use crate::formats::stream::StreamReader;
use crate::formats::trace::{write_report, write_trace, CompletedWriter};
use crate::formats::truth::TruthReader;

/// Final quantities of a tracking run, also written to the report file.
#[derive(Debug, Clone)]
pub struct TrackSummary {
    pub samples_processed: u64,
    pub nraee: Option<f64>,
    pub nraee_skipped: u64,
    pub nsre: Option<f64>,
    pub effective_rank: usize,
    pub beta: f64,
    pub beta_denominator_clamps: u64,
    pub spd_jitter_retries: u64,
}

pub fn cmd_track(config: &RunConfig) -> Result<TrackSummary, CliError> {
    let stream_path = config
        .stream
        .as_ref()
        .ok_or_else(|| CliError::Config("track requires stream".into()))?;
    let mut reader = StreamReader::open(stream_path)?;
    let k = reader.k();
    let l = config.rank_max_or_default()?;
    let dims = ModelDims::new(k, l)?;
    let hp = config.hyper_params()?;

    let mut state = match &config.resume {
        Some(path) => {
            let state = checkpoint::read(path, &hp)?;
            if state.dims() != dims {
                return Err(CliError::Config(format!(
                    "checkpoint dimensions {}x{} do not match run dimensions {}x{}",
                    state.dims().k,
                    state.dims().l,
                    k,
                    l
                )));
            }
            state
        }
        None => TrackerState::new(dims, hp, config.seed)
            .map_err(|e| CliError::Config(e.to_string()))?,
    };
    state.set_inner_sweeps(config.inner_sweeps);

    let mut truth = match &config.truth {
        Some(path) => {
            let truth = TruthReader::open(path)?;
            if truth.k != k {
                return Err(CliError::format(
                    path,
                    None,
                    format!("truth ambient dimension {} does not match stream {k}", truth.k),
                ));
            }
            Some(truth)
        }
        None => None,
    };

    // On resume, fast-forward past the samples the checkpoint already saw.
    let already = state.n() as usize;
    for skipped in 0..already {
        if reader.next_sample()?.is_none() {
            return Err(CliError::Config(format!(
                "checkpoint is {already} samples in but the stream ends at {skipped}"
            )));
        }
    }
    if let Some(truth) = truth.as_mut() {
        truth.skip_clean_rows(already.min(truth.n))?;
    }

    let want_nraee = config.metric_enabled("nraee") && truth.is_some();
    let want_nsre = config.metric_enabled("nsre") && truth.is_some();
    let want_rank = config.metric_enabled("rank");

    let mut nraee = NraeeAccumulator::new();
    let mut nraee_trace = MetricTrace::new("nraee");
    let mut nsre_trace = MetricTrace::new("nsre");
    let mut rank_trace = MetricTrace::new("effective_rank");
    let mut completed = match &config.completed_out {
        Some(path) => Some(CompletedWriter::create(path, k)?),
        None => None,
    };

    let mut last_index = already as u64;
    while let Some(sample) = reader.next_sample()? {
        let index = sample.index as u64;
        let outcome =
            state.step(&sample).map_err(|e| CliError::numerical(e, Some(sample.index)))?;
        last_index = index;

        if want_nraee {
            let truth = truth.as_mut().expect("nraee requires truth");
            let clean = truth.next_clean_row()?.ok_or_else(|| {
                CliError::format(
                    config.truth.as_ref().unwrap(),
                    None,
                    "stream is longer than the ground truth",
                )
            })?;
            let value = nraee.push(&clean, &outcome.reconstruction);
            nraee_trace.push(index, value).expect("indices increase");
        }
        if index % config.nsre_every == 0 {
            if want_nsre {
                let truth = truth.as_ref().expect("nsre requires truth");
                let value =
                    nsre(&state.w_mean(), truth.active_u(sample.index), config.rank_threshold);
                nsre_trace.push(index, value).expect("indices increase");
            }
            if want_rank {
                let rank = state.effective_rank(config.rank_threshold);
                rank_trace.push(index, rank as f64).expect("indices increase");
            }
        }
        if let Some(writer) = completed.as_mut() {
            writer.write_row(&outcome.reconstruction)?;
        }
        if let (Some(every), Some(path)) = (config.checkpoint_every, &config.checkpoint_out) {
            if every > 0 && index % every == 0 {
                checkpoint::write(&mut state, path)?;
            }
        }
    }

    if let Some(writer) = completed {
        writer.finish()?;
    }
    if let Some(path) = &config.checkpoint_out {
        checkpoint::write(&mut state, path)?;
    }

    let final_nsre = if want_nsre && last_index > already as u64 {
        let truth = truth.as_ref().expect("nsre requires truth");
        Some(nsre(&state.w_mean(), truth.active_u(last_index as usize), config.rank_threshold))
    } else {
        None
    };
    let summary = TrackSummary {
        samples_processed: last_index,
        nraee: if want_nraee { Some(nraee.current()) } else { None },
        nraee_skipped: nraee.skipped(),
        nsre: final_nsre,
        effective_rank: state.effective_rank(config.rank_threshold),
        beta: state.beta(),
        beta_denominator_clamps: state.diagnostics().beta_denominator_clamps,
        spd_jitter_retries: state.diagnostics().spd_jitter_retries,
    };

    if let Some(prefix) = &config.metrics_out {
        let prefix = prefix.to_string_lossy();
        if want_nraee {
            write_trace(std::path::Path::new(&format!("{prefix}nraee.csv")), &nraee_trace)?;
        }
        if want_nsre {
            write_trace(std::path::Path::new(&format!("{prefix}nsre.csv")), &nsre_trace)?;
        }
        if want_rank {
            write_trace(std::path::Path::new(&format!("{prefix}rank.csv")), &rank_trace)?;
        }
    }
    if let Some(path) = &config.report_out {
        write_report(path, &report_entries(&summary))?;
    }
    Ok(summary)
}

fn report_entries(summary: &TrackSummary) -> Vec<(String, String)> {
    let mut entries = vec![
        ("samples_processed".into(), summary.samples_processed.to_string()),
        ("effective_rank".into(), summary.effective_rank.to_string()),
        ("beta".into(), summary.beta.to_string()),
    ];
    if let Some(v) = summary.nraee {
        entries.push(("nraee".into(), v.to_string()));
        entries.push(("nraee_skipped".into(), summary.nraee_skipped.to_string()));
    }
    if let Some(v) = summary.nsre {
        entries.push(("nsre".into(), v.to_string()));
    }
    entries.push((
        "beta_denominator_clamps".into(),
        summary.beta_denominator_clamps.to_string(),
    ));
    entries.push(("spd_jitter_retries".into(), summary.spd_jitter_retries.to_string()));
    entries
}
