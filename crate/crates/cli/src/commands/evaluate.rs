//! `evaluate`: compute metrics from files produced by earlier commands: a
//! completed matrix against the ground truth, and/or a checkpointed
//! subspace against the true one.

use ovbs_core::metrics::{nsre, MetricTrace, NraeeAccumulator, ResidualMapAccumulator};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::formats::checkpoint;
use crate::formats::trace::{write_report, write_trace, CompletedReader};
use crate::formats::truth::TruthReader;

pub fn cmd_evaluate(config: &RunConfig) -> Result<Vec<(String, String)>, CliError> {
    let truth_path = config
        .truth
        .as_ref()
        .ok_or_else(|| CliError::Config("evaluate requires truth".into()))?;
    let mut truth = TruthReader::open(truth_path)?;
    if config.completed_in.is_none() && config.checkpoint_in.is_none() {
        return Err(CliError::Config(
            "evaluate requires a completed matrix and/or a checkpoint".into(),
        ));
    }

    let mut entries: Vec<(String, String)> = Vec::new();
    let mut residual_trace: Option<MetricTrace> = None;

    if let Some(path) = &config.completed_in {
        let mut completed = CompletedReader::open(path)?;
        if completed.k() != truth.k {
            return Err(CliError::format(
                path,
                None,
                format!(
                    "completed matrix has K={}, ground truth has K={}",
                    completed.k(),
                    truth.k
                ),
            ));
        }
        let mut nraee = NraeeAccumulator::new();
        let mut residual = ResidualMapAccumulator::new(truth.k);
        let mut rows = 0usize;
        loop {
            match (completed.next_row()?, truth.next_clean_row()?) {
                (Some(estimate), Some(clean)) => {
                    nraee.push(&clean, &estimate);
                    residual
                        .push_row(&clean, &estimate)
                        .map_err(|e| CliError::format(path, None, e.to_string()))?;
                    rows += 1;
                }
                (None, None) => break,
                (Some(_), None) | (None, Some(_)) => {
                    return Err(CliError::format(
                        path,
                        None,
                        format!(
                            "completed matrix and ground truth disagree on length (saw {rows} shared rows)"
                        ),
                    ));
                }
            }
        }
        entries.push(("rows".into(), rows.to_string()));
        entries.push(("nraee".into(), nraee.current().to_string()));
        entries.push(("nraee_skipped".into(), nraee.skipped().to_string()));
        let map = residual.finish();
        let mut trace = MetricTrace::new("residual_map");
        for (coordinate, value) in map.iter().enumerate() {
            trace.push(coordinate as u64 + 1, *value).expect("indices increase");
        }
        entries.push((
            "residual_map_mean".into(),
            (map.sum() / map.len() as f64).to_string(),
        ));
        residual_trace = Some(trace);
    }

    if let Some(path) = &config.checkpoint_in {
        let hp = config.hyper_params()?;
        let state = checkpoint::read(path, &hp)?;
        if state.dims().k != truth.k {
            return Err(CliError::format(
                path,
                None,
                format!("checkpoint has K={}, ground truth has K={}", state.dims().k, truth.k),
            ));
        }
        let u_final = truth.active_u(truth.n);
        let subspace_error = nsre(&state.w_mean(), u_final, config.rank_threshold);
        entries.push(("nsre".into(), subspace_error.to_string()));
        entries
            .push(("effective_rank".into(), state.effective_rank(config.rank_threshold).to_string()));
        entries.push(("checkpoint_samples".into(), state.n().to_string()));
    }

    if let Some(prefix) = &config.metrics_out {
        if let Some(trace) = &residual_trace {
            let prefix = prefix.to_string_lossy();
            write_trace(std::path::Path::new(&format!("{prefix}residual_map.csv")), trace)?;
        }
    }
    if let Some(path) = &config.report_out {
        write_report(path, &entries)?;
    }
    Ok(entries)
}
