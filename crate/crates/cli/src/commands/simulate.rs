//! `simulate`: generate a synthetic stream and its ground truth.

use ovbs_core::datagen::ScenarioGenerator;

use crate::config::{RunConfig, StreamFormat};
use crate::error::CliError;
use crate::formats::stream::{BinaryStreamWriter, TextStreamWriter};
use crate::formats::truth::TruthWriter;

enum StreamOut {
    Text(TextStreamWriter),
    Binary(BinaryStreamWriter),
}

pub fn cmd_simulate(config: &RunConfig) -> Result<(), CliError> {
    let spec = config.scenario.to_spec(config.seed)?;
    let stream_path = config
        .stream_out
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate requires stream-out".into()))?;
    let truth_path = config
        .truth_out
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate requires truth-out".into()))?;

    let mut generator = ScenarioGenerator::new(spec.clone())?;
    let mut truth = TruthWriter::create(
        truth_path,
        generator.u(),
        generator.u2(),
        spec.n_samples,
        spec.change_at,
    )?;
    let mut stream = match config.stream_format {
        StreamFormat::Csv => StreamOut::Text(TextStreamWriter::create(stream_path, spec.k)?),
        StreamFormat::Binary => {
            StreamOut::Binary(BinaryStreamWriter::create(stream_path, spec.k)?)
        }
    };

    while let Some(generated) = generator.next_sample() {
        match &mut stream {
            StreamOut::Text(w) => w.write_sample(&generated.sample)?,
            StreamOut::Binary(w) => w.write_sample(&generated.sample)?,
        }
        truth.append_sample(&generated.coeffs, &generated.clean)?;
    }
    match stream {
        StreamOut::Text(w) => w.finish()?,
        StreamOut::Binary(w) => w.finish()?,
    }
    truth.finish()
}
