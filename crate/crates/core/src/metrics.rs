//! Evaluation metrics for tracking runs: normalized running average
//! estimation error, normalized subspace reconstruction error, effective
//! rank, and per-coordinate residual maps.

use nalgebra::{DMatrix, DVector};

/// Relative column-norm threshold shared by the effective-rank count and the
/// active-column restriction of the subspace error.
pub const DEFAULT_RANK_THRESHOLD: f64 = 1e-3;

/// Residual-norm fraction below which an orthogonalization candidate is
/// treated as linearly dependent and dropped.
const ORTHO_DROP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
    /// A trace index did not strictly increase.
    NonIncreasingIndex { last: u64, got: u64 },
}

impl std::fmt::Display for MetricsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {}x{}, got {}x{}", expected.0, expected.1, got.0, got.1)
            }
            Self::NonIncreasingIndex { last, got } => {
                write!(f, "trace index {got} does not increase past {last}")
            }
        }
    }
}

impl std::error::Error for MetricsError {}

/// A named sequence of (sample index, value) pairs with strictly increasing
/// indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTrace {
    pub name: String,
    values: Vec<(u64, f64)>,
}

impl MetricTrace {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), values: Vec::new() }
    }

    pub fn push(&mut self, index: u64, value: f64) -> Result<(), MetricsError> {
        if let Some(&(last, _)) = self.values.last() {
            if index <= last {
                return Err(MetricsError::NonIncreasingIndex { last, got: index });
            }
        }
        self.values.push((index, value));
        Ok(())
    }

    pub fn values(&self) -> &[(u64, f64)] {
        &self.values
    }

    pub fn last_value(&self) -> Option<f64> {
        self.values.last().map(|&(_, v)| v)
    }
}

/// Running average of per-sample normalized reconstruction errors
/// `||y_hat - y|| / ||y||`. Samples with zero-norm truth are skipped and
/// counted rather than poisoning the average.
#[derive(Debug, Clone, Copy, Default)]
pub struct NraeeAccumulator {
    sum: f64,
    count: u64,
    skipped: u64,
}

impl NraeeAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accumulates one sample and returns the current running average.
    pub fn push(&mut self, y_true: &DVector<f64>, y_hat: &DVector<f64>) -> f64 {
        let norm = y_true.norm();
        if norm > 0.0 {
            self.sum += (y_hat - y_true).norm() / norm;
            self.count += 1;
        } else {
            self.skipped += 1;
        }
        self.current()
    }

    pub fn current(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }
}

/// Count of norms exceeding `rel_threshold` times the largest norm.
pub fn effective_rank_from_norms(norms: &[f64], rel_threshold: f64) -> usize {
    let max = norms.iter().cloned().fold(0.0f64, f64::max);
    norms.iter().filter(|&&n| n > rel_threshold * max && n > 0.0).count()
}

/// Effective rank of a subspace matrix (`K x L`): the number of columns
/// surviving the relative column-norm threshold.
pub fn effective_rank(w: &DMatrix<f64>, rel_threshold: f64) -> usize {
    let norms: Vec<f64> = (0..w.ncols()).map(|l| w.column(l).norm()).collect();
    effective_rank_from_norms(&norms, rel_threshold)
}

/// Orthonormal basis of the column span via modified Gram-Schmidt with one
/// reorthogonalization pass. Columns whose residual falls below `1e-10` of
/// their original norm are dropped, so nearly dependent inputs do not inject
/// noise directions.
pub fn orthonormal_basis(cols: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = cols.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cols.ncols());
    for c in 0..cols.ncols() {
        let mut v = DVector::from_column_slice(cols.column(c).as_slice());
        let original = v.norm();
        if original == 0.0 {
            continue;
        }
        for _pass in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let residual = v.norm();
        if residual > ORTHO_DROP_TOL * original {
            basis.push(v / residual);
        }
    }
    let mut q = DMatrix::zeros(rows, basis.len());
    for (i, b) in basis.iter().enumerate() {
        q.set_column(i, b);
    }
    q
}

/// Normalized subspace reconstruction error: the Frobenius fraction of the
/// true subspace lying in the orthogonal complement of the span of the
/// estimated subspace's active columns.
///
/// Columns of `w_hat` below `rel_threshold` times the largest column norm
/// are excluded before orthogonalization; with no active columns the whole
/// of `u_true` is unexplained and the error is 1.
pub fn nsre(w_hat: &DMatrix<f64>, u_true: &DMatrix<f64>, rel_threshold: f64) -> f64 {
    let u_norm = u_true.norm();
    assert!(u_norm > 0.0, "true subspace matrix must be nonzero");
    assert_eq!(w_hat.nrows(), u_true.nrows(), "ambient dimensions must agree");

    let norms: Vec<f64> = (0..w_hat.ncols()).map(|l| w_hat.column(l).norm()).collect();
    let max = norms.iter().cloned().fold(0.0f64, f64::max);
    let active: Vec<usize> = (0..w_hat.ncols())
        .filter(|&l| norms[l] > rel_threshold * max && norms[l] > 0.0)
        .collect();
    if active.is_empty() {
        return 1.0;
    }
    let mut block = DMatrix::zeros(w_hat.nrows(), active.len());
    for (i, &l) in active.iter().enumerate() {
        block.set_column(i, &w_hat.column(l));
    }
    let q = orthonormal_basis(&block);
    if q.ncols() == 0 {
        return 1.0;
    }
    let projected = &q * (q.transpose() * u_true);
    (u_true - projected).norm() / u_norm
}

/// Mean absolute difference along the sample axis, one value per coordinate.
pub fn residual_map(
    y_true: &DMatrix<f64>,
    y_hat: &DMatrix<f64>,
) -> Result<DVector<f64>, MetricsError> {
    if y_true.shape() != y_hat.shape() {
        return Err(MetricsError::ShapeMismatch { expected: y_true.shape(), got: y_hat.shape() });
    }
    let n = y_true.nrows();
    let k = y_true.ncols();
    let mut out = DVector::zeros(k);
    for c in 0..k {
        let mut sum = 0.0;
        for r in 0..n {
            sum += (y_true[(r, c)] - y_hat[(r, c)]).abs();
        }
        out[c] = sum / n as f64;
    }
    Ok(out)
}

/// Streaming form of [`residual_map`] for row-at-a-time consumption.
#[derive(Debug, Clone)]
pub struct ResidualMapAccumulator {
    sums: DVector<f64>,
    rows: u64,
}

impl ResidualMapAccumulator {
    pub fn new(k: usize) -> Self {
        Self { sums: DVector::zeros(k), rows: 0 }
    }

    pub fn push_row(
        &mut self,
        y_true: &DVector<f64>,
        y_hat: &DVector<f64>,
    ) -> Result<(), MetricsError> {
        if y_true.len() != self.sums.len() || y_hat.len() != self.sums.len() {
            return Err(MetricsError::ShapeMismatch {
                expected: (1, self.sums.len()),
                got: (1, y_true.len().max(y_hat.len())),
            });
        }
        for c in 0..self.sums.len() {
            self.sums[c] += (y_true[c] - y_hat[c]).abs();
        }
        self.rows += 1;
        Ok(())
    }

    pub fn finish(&self) -> DVector<f64> {
        if self.rows == 0 {
            self.sums.clone()
        } else {
            &self.sums / self.rows as f64
        }
    }
}
