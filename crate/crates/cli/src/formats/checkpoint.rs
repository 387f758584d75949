//! Tracker state checkpoint (`OVBS`): a versioned binary blob from which a
//! run continues bit-identically.
//!
//! Layout: magic `OVBS`, format version u32, K u32, L u32, lambda f64,
//! flags u32 (bit 0: element sparsity), then row-major little-endian f64
//! sections: subspace means (K x L), subspace variances (K x L), column
//! scales (L), column hyperparameters (L), element scales (K x L), element
//! hyperparameters (K x L), noise precision (1), cross-correlation T
//! (L x K), coefficient moment Q (L x L), the K per-row moment matrices
//! (each L x L), observed energies d (K), and finally the stream position n
//! as u64. The lazily decayed statistics are materialized before writing,
//! so the stored matrices are the live values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ovbs_core::model::{HyperParams, ModelDims};
use ovbs_core::online::{SufficientStats, TrackerState};

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"OVBS";
pub const VERSION: u32 = 1;

const FLAG_SPARSE: u32 = 0b01;

fn write_matrix_row_major(w: &mut impl Write, m: &DMatrix<f64>) -> std::io::Result<()> {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            w.write_all(&m[(r, c)].to_le_bytes())?;
        }
    }
    Ok(())
}

fn write_vector(w: &mut impl Write, v: &DVector<f64>) -> std::io::Result<()> {
    for x in v.iter() {
        w.write_all(&x.to_le_bytes())?;
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

fn read_vector(r: &mut impl Read, len: usize) -> std::io::Result<DVector<f64>> {
    let mut v = DVector::zeros(len);
    let mut bytes = [0u8; 8];
    for i in 0..len {
        r.read_exact(&mut bytes)?;
        v[i] = f64::from_le_bytes(bytes);
    }
    Ok(v)
}

/// Writes a checkpoint. Pending statistic decays are applied in place first
/// so a resumed run and the continuing run share identical state.
pub fn write(state: &mut TrackerState, path: &Path) -> Result<(), CliError> {
    state.rebase_stats();
    let dims = state.dims();
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut flags = 0u32;
    if state.hp().sparse_subspace {
        flags |= FLAG_SPARSE;
    }
    (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(dims.k as u32).to_le_bytes())?;
        w.write_all(&(dims.l as u32).to_le_bytes())?;
        w.write_all(&state.hp().lambda.to_le_bytes())?;
        w.write_all(&flags.to_le_bytes())?;
        write_matrix_row_major(&mut w, &state.w_mean())?;
        write_matrix_row_major(&mut w, &state.w_var())?;
        write_vector(&mut w, state.s())?;
        write_vector(&mut w, state.delta())?;
        write_matrix_row_major(&mut w, &state.gamma())?;
        write_matrix_row_major(&mut w, &state.rho())?;
        w.write_all(&state.beta().to_le_bytes())?;
        write_matrix_row_major(&mut w, state.stats().t())?;
        write_matrix_row_major(&mut w, state.stats().q())?;
        for k in 0..dims.k {
            write_matrix_row_major(&mut w, &state.stats().p(k))?;
        }
        write_vector(&mut w, state.stats().d())?;
        w.write_all(&state.n().to_le_bytes())?;
        w.flush()
    })()
    .map_err(|e| CliError::io(path, e))
}

/// Reads a checkpoint back into a tracker. The forgetting factor and the
/// sparsity flag come from the file; the six Gamma hyperparameters are not
/// stored and are taken from `hp_template`.
pub fn read(path: &Path, hp_template: &HyperParams) -> Result<TrackerState, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut r = BufReader::new(file);
    let bad = |msg: &str| CliError::format(path, None, msg.to_string());

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| bad("truncated checkpoint"))?;
    if &magic != MAGIC {
        return Err(bad("not an OVBS checkpoint"));
    }
    let mut u32buf = [0u8; 4];
    let mut f64buf = [0u8; 8];
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated checkpoint"))?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated checkpoint"))?;
    let k = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated checkpoint"))?;
    let l = u32::from_le_bytes(u32buf) as usize;
    r.read_exact(&mut f64buf).map_err(|_| bad("truncated checkpoint"))?;
    let lambda = f64::from_le_bytes(f64buf);
    r.read_exact(&mut u32buf).map_err(|_| bad("truncated checkpoint"))?;
    let flags = u32::from_le_bytes(u32buf);

    let dims = ModelDims::new(k, l).map_err(|e| CliError::Config(e.to_string()))?;
    let mut hp = *hp_template;
    hp.lambda = lambda;
    hp.sparse_subspace = flags & FLAG_SPARSE != 0;

    let section = |r: &mut BufReader<File>, rows, cols| {
        read_matrix_row_major(r, rows, cols).map_err(|_| bad("truncated checkpoint section"))
    };
    let w_mean = section(&mut r, k, l)?;
    let w_var = section(&mut r, k, l)?;
    let s = read_vector(&mut r, l).map_err(|_| bad("truncated checkpoint section"))?;
    let delta = read_vector(&mut r, l).map_err(|_| bad("truncated checkpoint section"))?;
    let gamma = section(&mut r, k, l)?;
    let rho = section(&mut r, k, l)?;
    r.read_exact(&mut f64buf).map_err(|_| bad("truncated checkpoint section"))?;
    let beta = f64::from_le_bytes(f64buf);
    let t = section(&mut r, l, k)?;
    let q = section(&mut r, l, l)?;
    let mut p = Vec::with_capacity(k);
    for _ in 0..k {
        p.push(section(&mut r, l, l)?);
    }
    let d = read_vector(&mut r, k).map_err(|_| bad("truncated checkpoint section"))?;
    r.read_exact(&mut f64buf).map_err(|_| bad("truncated checkpoint section"))?;
    let n = u64::from_le_bytes(f64buf);

    let stats = SufficientStats::from_parts(t, q, p, d, n, lambda);
    TrackerState::from_parts(dims, hp, w_mean, w_var, gamma, rho, s, delta, beta, stats, n)
        .map_err(|e| CliError::format(path, None, e.to_string()))
}
