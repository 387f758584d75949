//! Synthetic scenario generation: rank-`r` subspaces with Gaussian entries,
//! i.i.d. coefficient streams, additive Gaussian noise, per-sample
//! observation masks of fixed size, optional abrupt subspace redraws, and
//! optional sparse subspaces.
//!
//! Everything is drawn from one seeded generator in a fixed order (subspace
//! first, then per sample: coefficients, noise, mask), so a scenario is
//! reproducible from its spec alone and can be generated either fully in
//! memory or streamed sample by sample.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::model::StreamSample;

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    InvalidSpec(String),
}

impl std::fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::InvalidSpec(msg) => write!(f, "invalid scenario: {msg}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

/// Recipe for one synthetic stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// Ambient dimension.
    pub k: usize,
    /// True subspace rank.
    pub r: usize,
    /// Stream length.
    pub n_samples: usize,
    /// Noise precision; the noise variance is its reciprocal.
    pub beta_true: f64,
    /// Fraction of observed entries per sample, in (0, 1]. Every sample
    /// observes exactly `ceil(pi * K)` positions, drawn without replacement.
    pub pi: f64,
    /// When set, samples with index >= `change_at` are produced from a
    /// freshly redrawn subspace.
    pub change_at: Option<usize>,
    /// Fraction of entries zeroed per subspace column, in [0, 1).
    pub subspace_sparsity: f64,
    /// Disables the noise draw entirely (surrogate for infinite precision).
    pub noiseless: bool,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.r < 1 || self.r > self.k {
            return Err(ScenarioError::InvalidSpec(format!(
                "true rank must satisfy 1 <= r <= K, got r={}, K={}",
                self.r, self.k
            )));
        }
        if !(self.pi > 0.0 && self.pi <= 1.0) {
            return Err(ScenarioError::InvalidSpec(format!(
                "observation fraction must lie in (0, 1], got {}",
                self.pi
            )));
        }
        if !(0.0..1.0).contains(&self.subspace_sparsity) {
            return Err(ScenarioError::InvalidSpec(format!(
                "subspace sparsity must lie in [0, 1), got {}",
                self.subspace_sparsity
            )));
        }
        if !(self.beta_true > 0.0) || !self.beta_true.is_finite() {
            return Err(ScenarioError::InvalidSpec(format!(
                "noise precision must be a positive real, got {}",
                self.beta_true
            )));
        }
        if self.n_samples == 0 {
            return Err(ScenarioError::InvalidSpec("stream length must be positive".into()));
        }
        if let Some(c) = self.change_at {
            if c < 1 || c > self.n_samples {
                return Err(ScenarioError::InvalidSpec(format!(
                    "change point must lie in 1..=n_samples, got {c}"
                )));
            }
        }
        Ok(())
    }

    /// Observed entries per sample: `ceil(pi * K)`.
    pub fn observed_per_sample(&self) -> usize {
        (self.pi * self.k as f64).ceil() as usize
    }
}

/// One generated stream element.
#[derive(Debug, Clone)]
pub struct GeneratedSample {
    pub sample: StreamSample,
    /// Clean signal `U c`, before noise and masking.
    pub clean: DVector<f64>,
    pub coeffs: DVector<f64>,
}

/// Sample-by-sample generator holding only the subspace matrices and the
/// generator state; memory use is independent of the stream length.
pub struct ScenarioGenerator {
    spec: ScenarioSpec,
    u: DMatrix<f64>,
    u2: Option<DMatrix<f64>>,
    rng: Xoshiro256PlusPlus,
    next_index: usize,
}

/// Draws `count` distinct indices from `0..k` by partial Fisher-Yates.
fn draw_distinct(rng: &mut Xoshiro256PlusPlus, k: usize, count: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..k).collect();
    for j in 0..count {
        let pick = rng.gen_range(j..k);
        pool.swap(j, pick);
    }
    pool.truncate(count);
    pool
}

impl ScenarioGenerator {
    pub fn new(spec: ScenarioSpec) -> Result<Self, ScenarioError> {
        spec.validate()?;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(spec.seed);
        let u = Self::draw_subspace(&spec, &mut rng);
        let u2 = spec.change_at.map(|_| Self::draw_subspace(&spec, &mut rng));
        Ok(Self { spec, u, u2, rng, next_index: 1 })
    }

    /// Subspace entries i.i.d. `N(0, 1/K)`, drawn row-major, then an exact
    /// `ceil(sparsity * K)` count of positions zeroed per column. Surviving
    /// entries are not renormalized, so the sparsity level changes the
    /// signal energy exactly as drawn.
    fn draw_subspace(spec: &ScenarioSpec, rng: &mut Xoshiro256PlusPlus) -> DMatrix<f64> {
        let normal = Normal::new(0.0, (1.0 / spec.k as f64).sqrt()).expect("valid std");
        let mut u = DMatrix::zeros(spec.k, spec.r);
        for k in 0..spec.k {
            for l in 0..spec.r {
                u[(k, l)] = normal.sample(rng);
            }
        }
        if spec.subspace_sparsity > 0.0 {
            let zeros = (spec.subspace_sparsity * spec.k as f64).ceil() as usize;
            for l in 0..spec.r {
                for row in draw_distinct(rng, spec.k, zeros) {
                    u[(row, l)] = 0.0;
                }
            }
        }
        u
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn u2(&self) -> Option<&DMatrix<f64>> {
        self.u2.as_ref()
    }

    /// Subspace in effect for the sample at `index`.
    pub fn active_u(&self, index: usize) -> &DMatrix<f64> {
        match (self.spec.change_at, &self.u2) {
            (Some(c), Some(u2)) if index >= c => u2,
            _ => &self.u,
        }
    }

    /// Generates the next sample, or `None` once the stream is exhausted.
    pub fn next_sample(&mut self) -> Option<GeneratedSample> {
        if self.next_index > self.spec.n_samples {
            return None;
        }
        let index = self.next_index;
        self.next_index += 1;
        let spec = &self.spec;

        let std_normal = Normal::new(0.0, 1.0).expect("valid std");
        let coeffs =
            DVector::from_iterator(spec.r, (0..spec.r).map(|_| std_normal.sample(&mut self.rng)));
        let clean = self.active_u(index) * &coeffs;

        let mut noisy = clean.clone();
        if !spec.noiseless {
            let noise = Normal::new(0.0, (1.0 / spec.beta_true).sqrt()).expect("valid std");
            for k in 0..spec.k {
                noisy[k] += noise.sample(&mut self.rng);
            }
        }

        let mut observed = vec![false; spec.k];
        for pos in draw_distinct(&mut self.rng, spec.k, spec.observed_per_sample()) {
            observed[pos] = true;
        }
        let values: Vec<f64> = noisy.iter().cloned().collect();
        let sample = StreamSample::from_observations(&values, &observed, index);
        Some(GeneratedSample { sample, clean, coeffs })
    }
}

/// Fully materialized scenario: subspaces, coefficients, clean data, and the
/// masked sample stream.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub spec: ScenarioSpec,
    /// Initial subspace (`K x r`).
    pub u: DMatrix<f64>,
    /// Redrawn subspace when a change point is set.
    pub u2: Option<DMatrix<f64>>,
    /// Coefficients, one row per sample (`n x r`).
    pub c: DMatrix<f64>,
    /// Clean data, one row per sample (`n x K`).
    pub y: DMatrix<f64>,
    pub samples: Vec<StreamSample>,
}

impl GroundTruth {
    /// Subspace in effect for the sample at `index`.
    pub fn active_u(&self, index: usize) -> &DMatrix<f64> {
        match (self.spec.change_at, &self.u2) {
            (Some(c), Some(u2)) if index >= c => u2,
            _ => &self.u,
        }
    }

    /// Clean signal of the sample at 1-based `index`.
    pub fn clean_row(&self, index: usize) -> DVector<f64> {
        self.y.row(index - 1).transpose()
    }
}

/// Materializes a whole scenario. Deterministic per spec.
pub fn gen_scenario(spec: &ScenarioSpec) -> Result<GroundTruth, ScenarioError> {
    let mut generator = ScenarioGenerator::new(spec.clone())?;
    let n = spec.n_samples;
    let mut c = DMatrix::zeros(n, spec.r);
    let mut y = DMatrix::zeros(n, spec.k);
    let mut samples = Vec::with_capacity(n);
    while let Some(generated) = generator.next_sample() {
        let i = generated.sample.index - 1;
        c.row_mut(i).copy_from(&generated.coeffs.transpose());
        y.row_mut(i).copy_from(&generated.clean.transpose());
        samples.push(generated.sample);
    }
    Ok(GroundTruth {
        spec: spec.clone(),
        u: generator.u,
        u2: generator.u2,
        c,
        y,
        samples,
    })
}
