//! Shared domain types of the observation model: partially observed stream
//! samples, model dimensions, hyperparameters of the three-level hierarchy,
//! and fixed dataset windows for the batch engine.
//!
//! Masked entries are stored as literal zeros next to the binary mask, so
//! every downstream inner product of the form `W^T z` is correct without
//! branching on missingness. Time indices start at 1 so that the exponential
//! weight attached to sample `i` out of `n` is `lambda^(n-i)`.

use nalgebra::DVector;

/// Errors raised while validating domain objects.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    /// A vector length does not match the ambient dimension `K`.
    DimensionMismatch { expected: usize, got: usize },
    /// A mask entry is neither exactly 0 nor exactly 1.
    MaskNotBinary { position: usize, value: f64 },
    /// An observed-value entry is nonzero at a masked position.
    NonzeroAtMasked { position: usize, value: f64 },
    /// Sample indices of a dataset are not consecutive starting at 1.
    NonConsecutiveIndex { expected: usize, got: usize },
    /// A hyperparameter or dimension constraint is violated.
    InvalidParameter(String),
}

impl std::fmt::Display for ModelError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            Self::MaskNotBinary { position, value } => {
                write!(f, "mask value not binary at position {position}: {value}")
            }
            Self::NonzeroAtMasked { position, value } => {
                write!(f, "nonzero value {value} at masked position {position}")
            }
            Self::NonConsecutiveIndex { expected, got } => {
                write!(f, "non-consecutive sample index: expected {expected}, got {got}")
            }
            Self::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
        }
    }
}

impl std::error::Error for ModelError {}

/// Ambient dimension `K` and working rank overestimate `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub k: usize,
    pub l: usize,
}

impl ModelDims {
    /// Requires `1 <= L <= K`.
    pub fn new(k: usize, l: usize) -> Result<Self, ModelError> {
        if l < 1 || l > k {
            return Err(ModelError::InvalidParameter(format!(
                "rank overestimate must satisfy 1 <= L <= K, got L={l}, K={k}"
            )));
        }
        Ok(Self { k, l })
    }
}

/// One `K`-dimensional observation `z = phi .* y` together with its binary
/// observation mask and 1-based time index.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSample {
    /// Observed values; entries at masked positions are stored as 0.
    pub z: DVector<f64>,
    /// Binary mask: 1 = observed, 0 = missing.
    pub phi: DVector<f64>,
    /// 1-based time index `n`.
    pub index: usize,
}

impl StreamSample {
    pub fn new(z: DVector<f64>, phi: DVector<f64>, index: usize) -> Self {
        Self { z, phi, index }
    }

    /// Builds a sample from (value, observed) pairs, zeroing masked values.
    pub fn from_observations(values: &[f64], observed: &[bool], index: usize) -> Self {
        let z = DVector::from_iterator(
            values.len(),
            values
                .iter()
                .zip(observed)
                .map(|(&v, &o)| if o { v } else { 0.0 }),
        );
        let phi = DVector::from_iterator(
            observed.len(),
            observed.iter().map(|&o| if o { 1.0 } else { 0.0 }),
        );
        Self { z, phi, index }
    }

    /// Indices with `phi = 1`.
    pub fn observed_indices(&self) -> Vec<usize> {
        (0..self.phi.len()).filter(|&k| self.phi[k] == 1.0).collect()
    }
}

/// Checks the `StreamSample` invariants against the ambient dimension:
/// equal lengths, binary mask, and zeros stored at masked positions.
pub fn validate_sample(sample: &StreamSample, dims: &ModelDims) -> Result<(), ModelError> {
    if sample.z.len() != dims.k {
        return Err(ModelError::DimensionMismatch { expected: dims.k, got: sample.z.len() });
    }
    if sample.phi.len() != dims.k {
        return Err(ModelError::DimensionMismatch { expected: dims.k, got: sample.phi.len() });
    }
    for k in 0..dims.k {
        let m = sample.phi[k];
        if m != 0.0 && m != 1.0 {
            return Err(ModelError::MaskNotBinary { position: k, value: m });
        }
        if m == 0.0 && sample.z[k] != 0.0 {
            return Err(ModelError::NonzeroAtMasked { position: k, value: sample.z[k] });
        }
    }
    Ok(())
}

/// Number of observed entries `|phi|` of a sample.
pub fn observed_count(sample: &StreamSample) -> usize {
    sample.phi.iter().filter(|&&m| m == 1.0).count()
}

/// Fixed model constants: the six third-level Gamma hyperparameters, the
/// forgetting factor, and the element-sparsity switch.
///
/// With `sparse_subspace` disabled the per-element scale matrix stays pinned
/// at 1 and only the shared column scales act on the subspace matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub mu: f64,
    pub nu: f64,
    pub psi: f64,
    pub xi: f64,
    pub kappa: f64,
    pub theta: f64,
    /// Forgetting factor in (0, 1]; effective window size `1/(1-lambda)`.
    pub lambda: f64,
    /// Enables the per-element sparsity machinery on the subspace matrix.
    pub sparse_subspace: bool,
}

/// Default value for all six Gamma hyperparameters.
pub const DEFAULT_GAMMA_HYPER: f64 = 1e-6;

impl HyperParams {
    /// All six Gamma hyperparameters set to `1e-6`.
    pub fn with_forgetting(lambda: f64, sparse_subspace: bool) -> Result<Self, ModelError> {
        let hp = Self {
            mu: DEFAULT_GAMMA_HYPER,
            nu: DEFAULT_GAMMA_HYPER,
            psi: DEFAULT_GAMMA_HYPER,
            xi: DEFAULT_GAMMA_HYPER,
            kappa: DEFAULT_GAMMA_HYPER,
            theta: DEFAULT_GAMMA_HYPER,
            lambda,
            sparse_subspace,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("mu", self.mu),
            ("nu", self.nu),
            ("psi", self.psi),
            ("xi", self.xi),
            ("kappa", self.kappa),
            ("theta", self.theta),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidParameter(format!(
                    "hyperparameter {name} must be a positive real, got {v}"
                )));
            }
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(ModelError::InvalidParameter(format!(
                "forgetting factor must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// An ordered window of samples with consecutive 1-based indices, processed
/// by the batch engine. The diagonal weighting is implicit: sample `i` of
/// `n` carries weight `lambda^(n-i)`.
#[derive(Debug, Clone)]
pub struct BatchDataset {
    pub samples: Vec<StreamSample>,
    pub dims: ModelDims,
}

impl BatchDataset {
    pub fn new(samples: Vec<StreamSample>, dims: ModelDims) -> Result<Self, ModelError> {
        for (pos, sample) in samples.iter().enumerate() {
            validate_sample(sample, &dims)?;
            if sample.index != pos + 1 {
                return Err(ModelError::NonConsecutiveIndex {
                    expected: pos + 1,
                    got: sample.index,
                });
            }
        }
        Ok(Self { samples, dims })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims3() -> ModelDims {
        ModelDims::new(3, 2).unwrap()
    }

    #[test]
    fn validate_accepts_masked_zero_sample() {
        let s = StreamSample::new(
            DVector::from_vec(vec![1.0, 0.0, 2.0]),
            DVector::from_vec(vec![1.0, 0.0, 1.0]),
            1,
        );
        assert!(validate_sample(&s, &dims3()).is_ok());
    }

    #[test]
    fn validate_rejects_nonzero_at_masked_position() {
        let s = StreamSample::new(
            DVector::from_vec(vec![1.0, 5.0, 2.0]),
            DVector::from_vec(vec![1.0, 0.0, 1.0]),
            1,
        );
        assert!(matches!(
            validate_sample(&s, &dims3()),
            Err(ModelError::NonzeroAtMasked { position: 1, .. })
        ));
    }

    #[test]
    fn validate_rejects_dimension_mismatch() {
        let s = StreamSample::new(
            DVector::from_vec(vec![1.0, 2.0]),
            DVector::from_vec(vec![1.0, 1.0]),
            1,
        );
        assert!(matches!(
            validate_sample(&s, &dims3()),
            Err(ModelError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn validate_rejects_nonbinary_mask() {
        let s = StreamSample::new(
            DVector::from_vec(vec![1.0, 0.0, 2.0]),
            DVector::from_vec(vec![1.0, 0.5, 1.0]),
            1,
        );
        assert!(matches!(
            validate_sample(&s, &dims3()),
            Err(ModelError::MaskNotBinary { position: 1, .. })
        ));
    }

    #[test]
    fn observed_count_counts_ones() {
        let mk = |phi: Vec<f64>| {
            let k = phi.len();
            StreamSample::new(DVector::zeros(k), DVector::from_vec(phi), 1)
        };
        assert_eq!(observed_count(&mk(vec![1.0, 0.0, 1.0])), 2);
        assert_eq!(observed_count(&mk(vec![0.0, 0.0, 0.0])), 0);
        assert_eq!(observed_count(&mk(vec![1.0, 1.0, 1.0, 1.0])), 4);
    }

    /// Exhaustive check over every binary mask and a zero/nonzero value
    /// pattern for K <= 4: validate_sample accepts exactly the samples
    /// satisfying the invariants.
    #[test]
    fn validate_matches_invariants_exhaustively() {
        for k in 1..=4usize {
            let dims = ModelDims::new(k, 1).unwrap();
            for mask_bits in 0..(1u32 << k) {
                for value_bits in 0..(1u32 << k) {
                    let phi: Vec<f64> =
                        (0..k).map(|j| f64::from((mask_bits >> j) & 1)).collect();
                    let z: Vec<f64> = (0..k)
                        .map(|j| if (value_bits >> j) & 1 == 1 { 1.5 } else { 0.0 })
                        .collect();
                    let expect_ok = (0..k).all(|j| phi[j] == 1.0 || z[j] == 0.0);
                    let s = StreamSample::new(
                        DVector::from_vec(z),
                        DVector::from_vec(phi),
                        1,
                    );
                    assert_eq!(validate_sample(&s, &dims).is_ok(), expect_ok);
                }
            }
        }
    }

    #[test]
    fn observed_count_plus_zero_count_is_k() {
        let s = StreamSample::from_observations(
            &[1.0, 2.0, 3.0, 4.0, 5.0],
            &[true, false, true, false, false],
            1,
        );
        let zeros = s.phi.iter().filter(|&&m| m == 0.0).count();
        assert_eq!(observed_count(&s) + zeros, 5);
    }

    #[test]
    fn from_observations_zeroes_masked_values() {
        let s = StreamSample::from_observations(&[1.0, 7.0, 3.0], &[true, false, true], 2);
        assert_eq!(s.z[1], 0.0);
        assert_eq!(s.phi[1], 0.0);
        assert!(validate_sample(&s, &dims3()).is_ok());
    }

    #[test]
    fn hyperparams_validation() {
        assert!(HyperParams::with_forgetting(0.98, false).is_ok());
        assert!(HyperParams::with_forgetting(1.0, true).is_ok());
        assert!(HyperParams::with_forgetting(0.0, false).is_err());
        assert!(HyperParams::with_forgetting(1.5, false).is_err());
        let mut hp = HyperParams::with_forgetting(0.9, false).unwrap();
        hp.nu = 0.0;
        assert!(hp.validate().is_err());
    }

    #[test]
    fn dims_validation() {
        assert!(ModelDims::new(10, 3).is_ok());
        assert!(ModelDims::new(10, 10).is_ok());
        assert!(ModelDims::new(10, 0).is_err());
        assert!(ModelDims::new(3, 4).is_err());
    }

    #[test]
    fn domain_types_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<StreamSample>();
        assert_send_sync::<HyperParams>();
        assert_send_sync::<ModelDims>();
        assert_send_sync::<BatchDataset>();
    }

    #[test]
    fn dataset_requires_consecutive_indices_from_one() {
        let dims = ModelDims::new(2, 1).unwrap();
        let mk = |i| StreamSample::new(DVector::zeros(2), DVector::zeros(2), i);
        assert!(BatchDataset::new(vec![mk(1), mk(2), mk(3)], dims).is_ok());
        assert!(matches!(
            BatchDataset::new(vec![mk(1), mk(3)], dims),
            Err(ModelError::NonConsecutiveIndex { expected: 2, got: 3 })
        ));
        assert!(BatchDataset::new(vec![mk(0)], dims).is_err());
    }
}
