//! Ground-truth file (`OVBG`): the subspaces, coefficients and clean data
//! behind a simulated stream.
//!
//! Layout: magic `OVBG`, version u32, K u32, r u32, n u64, flags u32
//! (bit 0: redrawn subspace present, bit 1: clean data present), change
//! index u64 (0 when none), then little-endian f64 sections in row-major
//! order: `U` (K x r), optional `U2` (K x r), `C` (n x r), optional `Y`
//! (n x K). The clean-data section is sought over on read so evaluation can
//! stream rows without loading the matrix.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"OVBG";
pub const VERSION: u32 = 1;

const HEADER_BYTES: u64 = 4 + 4 + 4 + 4 + 8 + 4 + 8;

fn write_matrix_row_major(w: &mut impl Write, m: &DMatrix<f64>) -> std::io::Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            w.write_all(&m[(r, c)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_matrix_row_major(
    r: &mut impl Read,
    rows: usize,
    cols: usize,
) -> std::io::Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(rows, cols);
    let mut bytes = [0u8; 8];
    for row in 0..rows {
        for col in 0..cols {
            r.read_exact(&mut bytes)?;
            m[(row, col)] = f64::from_le_bytes(bytes);
        }
    }
    Ok(m)
}

/// Streaming writer: header and subspaces first, clean-data rows as they
/// are generated, coefficients back-filled at the end (the section is tiny
/// and precedes the data section, so it is reserved and seeked back to).
pub struct TruthWriter {
    file: BufWriter<File>,
    path: PathBuf,
    k: usize,
    r: usize,
    n: usize,
    rows_written: usize,
    coeff_buffer: Vec<f64>,
    coeff_offset: u64,
}

impl TruthWriter {
    pub fn create(
        path: &Path,
        u: &DMatrix<f64>,
        u2: Option<&DMatrix<f64>>,
        n: usize,
        change_at: Option<usize>,
    ) -> Result<Self, CliError> {
        let k = u.nrows();
        let r = u.ncols();
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut writer = BufWriter::new(file);
        let mut flags = 0b10u32; // clean data always present
        if u2.is_some() {
            flags |= 0b01;
        }
        (|| -> std::io::Result<()> {
            writer.write_all(MAGIC)?;
            writer.write_all(&VERSION.to_le_bytes())?;
            writer.write_all(&(k as u32).to_le_bytes())?;
            writer.write_all(&(r as u32).to_le_bytes())?;
            writer.write_all(&(n as u64).to_le_bytes())?;
            writer.write_all(&flags.to_le_bytes())?;
            writer.write_all(&(change_at.unwrap_or(0) as u64).to_le_bytes())?;
            write_matrix_row_major(&mut writer, u)?;
            if let Some(u2) = u2 {
                write_matrix_row_major(&mut writer, u2)?;
            }
            Ok(())
        })()
        .map_err(|e| CliError::io(path, e))?;

        let subspaces = if u2.is_some() { 2 } else { 1 };
        let coeff_offset = HEADER_BYTES + (subspaces * k * r * 8) as u64;
        // Reserve the coefficient section; clean rows follow it.
        let mut writer = writer;
        writer
            .seek(SeekFrom::Start(coeff_offset + (n * r * 8) as u64))
            .map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            file: writer,
            path: path.to_path_buf(),
            k,
            r,
            n,
            rows_written: 0,
            coeff_buffer: Vec::with_capacity(n * r),
            coeff_offset,
        })
    }

    pub fn append_sample(
        &mut self,
        coeffs: &DVector<f64>,
        clean: &DVector<f64>,
    ) -> Result<(), CliError> {
        debug_assert_eq!(coeffs.len(), self.r);
        debug_assert_eq!(clean.len(), self.k);
        for v in coeffs.iter() {
            self.coeff_buffer.push(*v);
        }
        for v in clean.iter() {
            self.file
                .write_all(&v.to_le_bytes())
                .map_err(|e| CliError::io(&self.path, e))?;
        }
        self.rows_written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        if self.rows_written != self.n {
            return Err(CliError::Config(format!(
                "truth writer received {} rows, expected {}",
                self.rows_written, self.n
            )));
        }
        self.file
            .seek(SeekFrom::Start(self.coeff_offset))
            .map_err(|e| CliError::io(&self.path, e))?;
        for v in &self.coeff_buffer {
            self.file
                .write_all(&v.to_le_bytes())
                .map_err(|e| CliError::io(&self.path, e))?;
        }
        self.file.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

/// Reader with the subspaces resident and the clean rows streamed.
pub struct TruthReader {
    reader: BufReader<File>,
    path: PathBuf,
    pub k: usize,
    pub r: usize,
    pub n: usize,
    pub change_at: Option<usize>,
    pub u: DMatrix<f64>,
    pub u2: Option<DMatrix<f64>>,
    has_clean: bool,
    clean_offset: u64,
    next_row: usize,
}

impl TruthReader {
    pub fn open(path: &Path) -> Result<Self, CliError> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut reader = BufReader::new(file);
        let mut magic = [0u8; 4];
        reader
            .read_exact(&mut magic)
            .map_err(|_| CliError::format(path, None, "truncated truth header"))?;
        if &magic != MAGIC {
            return Err(CliError::format(path, None, "not an OVBG ground-truth file"));
        }
        let mut u32buf = [0u8; 4];
        let mut u64buf = [0u8; 8];
        let mut next_u32 = |r: &mut BufReader<File>| -> Result<u32, CliError> {
            r.read_exact(&mut u32buf)
                .map_err(|_| CliError::format(path, None, "truncated truth header"))?;
            Ok(u32::from_le_bytes(u32buf))
        };
        let version = next_u32(&mut reader)?;
        if version != VERSION {
            return Err(CliError::format(path, None, format!("unsupported version {version}")));
        }
        let k = next_u32(&mut reader)? as usize;
        let r = next_u32(&mut reader)? as usize;
        reader
            .read_exact(&mut u64buf)
            .map_err(|_| CliError::format(path, None, "truncated truth header"))?;
        let n = u64::from_le_bytes(u64buf) as usize;
        let flags = next_u32(&mut reader)?;
        reader
            .read_exact(&mut u64buf)
            .map_err(|_| CliError::format(path, None, "truncated truth header"))?;
        let change_raw = u64::from_le_bytes(u64buf) as usize;

        let has_u2 = flags & 0b01 != 0;
        let has_clean = flags & 0b10 != 0;
        let u = read_matrix_row_major(&mut reader, k, r)
            .map_err(|_| CliError::format(path, None, "truncated subspace section"))?;
        let u2 = if has_u2 {
            Some(
                read_matrix_row_major(&mut reader, k, r)
                    .map_err(|_| CliError::format(path, None, "truncated subspace section"))?,
            )
        } else {
            None
        };
        let subspaces = if has_u2 { 2 } else { 1 };
        let clean_offset = HEADER_BYTES + (subspaces * k * r * 8) as u64 + (n * r * 8) as u64;
        Ok(Self {
            reader,
            path: path.to_path_buf(),
            k,
            r,
            n,
            change_at: if change_raw == 0 { None } else { Some(change_raw) },
            u,
            u2,
            has_clean,
            clean_offset,
            next_row: 0,
        })
    }

    /// Subspace in effect for the 1-based sample index.
    pub fn active_u(&self, index: usize) -> &DMatrix<f64> {
        match (self.change_at, &self.u2) {
            (Some(c), Some(u2)) if index >= c => u2,
            _ => &self.u,
        }
    }

    /// Coefficient matrix (`n x r`), loaded on demand.
    pub fn read_coeffs(&mut self) -> Result<DMatrix<f64>, CliError> {
        let subspaces = if self.u2.is_some() { 2 } else { 1 };
        let offset = HEADER_BYTES + (subspaces * self.k * self.r * 8) as u64;
        self.reader
            .seek(SeekFrom::Start(offset))
            .map_err(|e| CliError::io(&self.path, e))?;
        let c = read_matrix_row_major(&mut self.reader, self.n, self.r)
            .map_err(|_| CliError::format(&self.path, None, "truncated coefficient section"))?;
        // Restore the streaming cursor.
        self.next_row = usize::MAX;
        Ok(c)
    }

    /// Next clean row in sequence, starting from the first. `None` past the
    /// end.
    pub fn next_clean_row(&mut self) -> Result<Option<DVector<f64>>, CliError> {
        if !self.has_clean {
            return Err(CliError::format(&self.path, None, "truth file carries no clean data"));
        }
        if self.next_row == usize::MAX {
            return Err(CliError::format(&self.path, None, "clean cursor invalidated"));
        }
        if self.next_row >= self.n {
            return Ok(None);
        }
        if self.next_row == 0 {
            self.reader
                .seek(SeekFrom::Start(self.clean_offset))
                .map_err(|e| CliError::io(&self.path, e))?;
        }
        let mut row = DVector::zeros(self.k);
        let mut bytes = [0u8; 8];
        for j in 0..self.k {
            self.reader
                .read_exact(&mut bytes)
                .map_err(|_| CliError::format(&self.path, None, "truncated clean-data section"))?;
            row[j] = f64::from_le_bytes(bytes);
        }
        self.next_row += 1;
        Ok(Some(row))
    }

    /// Skips `count` clean rows (resume support).
    pub fn skip_clean_rows(&mut self, count: usize) -> Result<(), CliError> {
        if count == 0 {
            return Ok(());
        }
        let target = self.next_row + count;
        if target > self.n {
            return Err(CliError::format(&self.path, None, "skip past end of clean data"));
        }
        self.reader
            .seek(SeekFrom::Start(self.clean_offset + (target * self.k * 8) as u64))
            .map_err(|e| CliError::io(&self.path, e))?;
        self.next_row = target;
        Ok(())
    }
}
