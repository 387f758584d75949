//! Metric-trace CSV (`index,value` rows under a `# metric=<name>` header),
//! key=value report files, and the completed-matrix text format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use ovbs_core::metrics::MetricTrace;

use crate::error::CliError;

pub const COMPLETED_MAGIC: &str = "# OVBS-COMPLETED v1";

pub fn write_trace(path: &Path, trace: &MetricTrace) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        writeln!(w, "# metric={}", trace.name)?;
        for (index, value) in trace.values() {
            writeln!(w, "{index},{value}")?;
        }
        w.flush()
    })()
    .map_err(|e| CliError::io(path, e))
}

/// Key=value report, one pair per line, in the given order.
pub fn write_report(path: &Path, entries: &[(String, String)]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    (|| -> std::io::Result<()> {
        for (key, value) in entries {
            writeln!(w, "{key}={value}")?;
        }
        w.flush()
    })()
    .map_err(|e| CliError::io(path, e))
}

/// Incremental writer for full reconstructions, one CSV row per sample.
pub struct CompletedWriter {
    writer: BufWriter<File>,
    path: PathBuf,
    k: usize,
}

impl CompletedWriter {
    pub fn create(path: &Path, k: usize) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut writer = BufWriter::new(file);
        writeln!(writer, "{COMPLETED_MAGIC} K={k}").map_err(|e| CliError::io(path, e))?;
        Ok(Self { writer, path: path.to_path_buf(), k })
    }

    pub fn write_row(&mut self, row: &DVector<f64>) -> Result<(), CliError> {
        debug_assert_eq!(row.len(), self.k);
        let mut line = String::with_capacity(self.k * 8);
        for j in 0..self.k {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&row[j].to_string());
        }
        writeln!(self.writer, "{line}").map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Sequential reader over a completed-matrix file.
pub struct CompletedReader {
    lines: std::io::Lines<BufReader<File>>,
    path: PathBuf,
    k: usize,
    line_no: usize,
}

impl CompletedReader {
    pub fn open(path: &Path) -> Result<Self, CliError> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| CliError::format(path, Some(1), "empty completed-matrix file"))?
            .map_err(|e| CliError::io(path, e))?;
        let k = header
            .strip_prefix(COMPLETED_MAGIC)
            .and_then(|rest| rest.trim().strip_prefix("K="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| CliError::format(path, Some(1), "missing OVBS-COMPLETED header"))?;
        Ok(Self { lines, path: path.to_path_buf(), k, line_no: 1 })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn next_row(&mut self) -> Result<Option<DVector<f64>>, CliError> {
        let Some(line) = self.lines.next() else {
            return Ok(None);
        };
        self.line_no += 1;
        let line = line.map_err(|e| CliError::io(&self.path, e))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != self.k {
            return Err(CliError::format(
                &self.path,
                Some(self.line_no),
                format!("expected {} columns, got {}", self.k, fields.len()),
            ));
        }
        let mut row = DVector::zeros(self.k);
        for (j, field) in fields.iter().enumerate() {
            row[j] = field.trim().parse().map_err(|_| {
                CliError::format(
                    &self.path,
                    Some(self.line_no),
                    format!("column {}: cannot parse `{field}`", j + 1),
                )
            })?;
        }
        Ok(Some(row))
    }
}
