//! Stream file formats.
//!
//! Text format (`OVBS-STREAM v1`): a header line `# OVBS-STREAM v1 K=<K>`
//! followed by one CSV row per sample; missing entries are written as the
//! literal token `NaN` and parse back to a masked zero.
//!
//! Binary format (`OVBD`): magic bytes, `K` as little-endian u32, then per
//! sample a byte-padded K-bit mask (LSB first within each byte) followed by
//! the observed values only, as little-endian f64. Compact when most entries
//! are missing.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ovbs_core::model::StreamSample;

use crate::error::CliError;

pub const TEXT_MAGIC: &str = "# OVBS-STREAM v1";
pub const BINARY_MAGIC: &[u8; 4] = b"OVBD";

/// Incremental writer for the text format.
pub struct TextStreamWriter {
    writer: BufWriter<File>,
    path: PathBuf,
    k: usize,
}

impl TextStreamWriter {
    pub fn create(path: &Path, k: usize) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut writer = BufWriter::new(file);
        writeln!(writer, "{TEXT_MAGIC} K={k}").map_err(|e| CliError::io(path, e))?;
        Ok(Self { writer, path: path.to_path_buf(), k })
    }

    pub fn write_sample(&mut self, sample: &StreamSample) -> Result<(), CliError> {
        debug_assert_eq!(sample.z.len(), self.k);
        let mut row = String::with_capacity(self.k * 8);
        for j in 0..self.k {
            if j > 0 {
                row.push(',');
            }
            if sample.phi[j] == 1.0 {
                row.push_str(&sample.z[j].to_string());
            } else {
                row.push_str("NaN");
            }
        }
        writeln!(self.writer, "{row}").map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Incremental writer for the binary format.
pub struct BinaryStreamWriter {
    writer: BufWriter<File>,
    path: PathBuf,
    k: usize,
}

impl BinaryStreamWriter {
    pub fn create(path: &Path, k: usize) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut writer = BufWriter::new(file);
        writer.write_all(BINARY_MAGIC).map_err(|e| CliError::io(path, e))?;
        writer
            .write_all(&(k as u32).to_le_bytes())
            .map_err(|e| CliError::io(path, e))?;
        Ok(Self { writer, path: path.to_path_buf(), k })
    }

    pub fn write_sample(&mut self, sample: &StreamSample) -> Result<(), CliError> {
        debug_assert_eq!(sample.z.len(), self.k);
        let mut mask = vec![0u8; self.k.div_ceil(8)];
        for j in 0..self.k {
            if sample.phi[j] == 1.0 {
                mask[j / 8] |= 1 << (j % 8);
            }
        }
        self.writer.write_all(&mask).map_err(|e| CliError::io(&self.path, e))?;
        for j in 0..self.k {
            if sample.phi[j] == 1.0 {
                self.writer
                    .write_all(&sample.z[j].to_le_bytes())
                    .map_err(|e| CliError::io(&self.path, e))?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

enum ReaderKind {
    Text { lines: std::io::Lines<BufReader<File>>, line_no: usize },
    Binary { reader: BufReader<File> },
}

/// Sequential reader over either stream format, detected from the content.
pub struct StreamReader {
    kind: ReaderKind,
    path: PathBuf,
    k: usize,
    next_index: usize,
}

impl StreamReader {
    pub fn open(path: &Path) -> Result<Self, CliError> {
        let mut file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut magic = [0u8; 4];
        let got = file.read(&mut magic).map_err(|e| CliError::io(path, e))?;
        if got == 4 && &magic == BINARY_MAGIC {
            let mut reader = BufReader::new(file);
            let mut k_bytes = [0u8; 4];
            reader
                .read_exact(&mut k_bytes)
                .map_err(|_| CliError::format(path, None, "truncated binary stream header"))?;
            let k = u32::from_le_bytes(k_bytes) as usize;
            if k == 0 {
                return Err(CliError::format(path, None, "binary stream declares K=0"));
            }
            return Ok(Self {
                kind: ReaderKind::Binary { reader },
                path: path.to_path_buf(),
                k,
                next_index: 1,
            });
        }
        // Text route: reopen from the start and parse the header line.
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| CliError::format(path, Some(1), "empty stream file"))?
            .map_err(|e| CliError::io(path, e))?;
        let k = parse_text_header(&header)
            .ok_or_else(|| CliError::format(path, Some(1), "missing OVBS-STREAM header"))?;
        Ok(Self {
            kind: ReaderKind::Text { lines, line_no: 1 },
            path: path.to_path_buf(),
            k,
            next_index: 1,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Reads the next sample; `Ok(None)` at end of stream.
    pub fn next_sample(&mut self) -> Result<Option<StreamSample>, CliError> {
        let index = self.next_index;
        let k = self.k;
        match &mut self.kind {
            ReaderKind::Text { lines, line_no } => {
                let Some(line) = lines.next() else {
                    return Ok(None);
                };
                *line_no += 1;
                let line_here = *line_no;
                let line = line.map_err(|e| CliError::io(&self.path, e))?;
                let fields: Vec<&str> = line.split(',').collect();
                if fields.len() != k {
                    return Err(CliError::format(
                        &self.path,
                        Some(line_here),
                        format!("expected {k} columns, got {}", fields.len()),
                    ));
                }
                let mut values = vec![0.0; k];
                let mut observed = vec![false; k];
                for (j, field) in fields.iter().enumerate() {
                    let field = field.trim();
                    if field == "NaN" {
                        continue;
                    }
                    let value: f64 = field.parse().map_err(|_| {
                        CliError::format(
                            &self.path,
                            Some(line_here),
                            format!("column {}: cannot parse `{field}`", j + 1),
                        )
                    })?;
                    if !value.is_finite() {
                        return Err(CliError::format(
                            &self.path,
                            Some(line_here),
                            format!("column {}: non-finite observed value", j + 1),
                        ));
                    }
                    values[j] = value;
                    observed[j] = true;
                }
                self.next_index += 1;
                Ok(Some(StreamSample::from_observations(&values, &observed, index)))
            }
            ReaderKind::Binary { reader } => {
                let mut mask = vec![0u8; k.div_ceil(8)];
                match reader.read_exact(&mut mask) {
                    Ok(()) => {}
                    Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
                        return Ok(None);
                    }
                    Err(e) => return Err(CliError::io(&self.path, e)),
                }
                let mut values = vec![0.0; k];
                let mut observed = vec![false; k];
                for j in 0..k {
                    if mask[j / 8] >> (j % 8) & 1 == 1 {
                        observed[j] = true;
                    }
                }
                for j in 0..k {
                    if observed[j] {
                        let mut bytes = [0u8; 8];
                        reader.read_exact(&mut bytes).map_err(|_| {
                            CliError::format(
                                &self.path,
                                None,
                                format!("truncated sample {index} in binary stream"),
                            )
                        })?;
                        values[j] = f64::from_le_bytes(bytes);
                    }
                }
                self.next_index += 1;
                Ok(Some(StreamSample::from_observations(&values, &observed, index)))
            }
        }
    }
}

fn parse_text_header(line: &str) -> Option<usize> {
    let rest = line.strip_prefix(TEXT_MAGIC)?.trim();
    let k = rest.strip_prefix("K=")?;
    k.parse().ok()
}
