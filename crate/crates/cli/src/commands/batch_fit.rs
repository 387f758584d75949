//! `batch-fit`: run the batch engine over a whole stream held in memory,
//! guarded by an entry-count cap.

use std::io::Write;

use ovbs_core::batch::batch_fit;
use ovbs_core::metrics::effective_rank;
use ovbs_core::model::{BatchDataset, ModelDims};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::formats::stream::StreamReader;
use crate::formats::trace::CompletedWriter;

pub fn cmd_batch_fit(config: &RunConfig) -> Result<(), CliError> {
    let stream_path = config
        .stream
        .as_ref()
        .ok_or_else(|| CliError::Config("batch-fit requires stream".into()))?;
    let mut reader = StreamReader::open(stream_path)?;
    let k = reader.k();
    let l = config.rank_max_or_default()?;
    let dims = ModelDims::new(k, l)?;
    let hp = config.hyper_params()?;

    let mut samples = Vec::new();
    while let Some(sample) = reader.next_sample()? {
        if (samples.len() + 1) * k > config.batch_cap {
            return Err(CliError::Config(format!(
                "dataset exceeds batch cap: more than {} entries (cap {})",
                (samples.len() + 1) * k,
                config.batch_cap
            )));
        }
        samples.push(sample);
    }
    let n = samples.len();
    let data = BatchDataset::new(samples, dims)?;
    let outcome = batch_fit(&data, &hp, config.max_iters, config.tol, config.seed)?;
    let posterior = &outcome.posterior;
    let rank = effective_rank(&posterior.w_mean, config.rank_threshold);

    if let Some(path) = &config.report_out {
        let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        (|| -> std::io::Result<()> {
            writeln!(w, "n={n}")?;
            writeln!(w, "k={k}")?;
            writeln!(w, "l={l}")?;
            writeln!(w, "iterations={}", outcome.iterations)?;
            writeln!(w, "converged={}", outcome.converged)?;
            writeln!(w, "beta={}", posterior.beta)?;
            writeln!(w, "effective_rank={rank}")?;
            let s: Vec<String> = posterior.s.iter().map(|v| v.to_string()).collect();
            writeln!(w, "s={}", s.join(","))?;
            writeln!(w, "w_mean=")?;
            for row in 0..k {
                let cells: Vec<String> =
                    (0..l).map(|c| posterior.w_mean[(row, c)].to_string()).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
            w.flush()
        })()
        .map_err(|e| CliError::io(path, e))?;
    }

    if let Some(path) = &config.completed_out {
        let recon = posterior.reconstruction();
        let mut writer = CompletedWriter::create(path, k)?;
        for row in 0..n {
            writer.write_row(&recon.row(row).transpose())?;
        }
        writer.finish()?;
    }
    Ok(())
}
