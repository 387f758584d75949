//! Streaming subspace tracker: constant-memory per-sample inference with
//! exponentially weighted recursive statistics, cyclic coordinate updates of
//! the subspace matrix, soft rank pruning through shared column scales, and
//! optional per-element sparsity.
//!
//! Per sample the tracker (a) projects the observation onto the current
//! subspace, (b) folds the projection into fixed-size statistics, (c) sweeps
//! the subspace rows that received an observation, (d) refreshes the scale
//! hierarchy, and (e) refreshes the noise precision. All state is fixed-size
//! in the stream length.
//!
//! Cost per step is `O(|phi| L^2 + K L)` where `|phi|` is the number of
//! observed entries. Two structural choices keep it there: the per-row
//! moment matrices decay lazily (a scalar power of the forgetting factor is
//! applied when a row is next observed, instead of rescaling K matrices
//! every step), and the coordinate sweep visits only rows with an observed
//! entry this step. Rows without an observation carry their posterior
//! forward; their statistics still decay exactly.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::bayes::{
    gig_mean_half, spd_factor_flops, spd_inverse_flops, MathError, SpdFactor,
};
use crate::metrics;
use crate::model::{validate_sample, HyperParams, ModelDims, ModelError, StreamSample};

/// Variance and scale entries are clamped to this range after each update.
pub const SCALE_MIN: f64 = 1e-12;
pub const SCALE_MAX: f64 = 1e12;

/// Flop charge booked for one scalar power of the forgetting factor.
const POWI_FLOPS: u64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum TrackerError {
    Model(ModelError),
    Math(MathError),
    /// A subspace-row precision collapsed below the representable range.
    DivisionUnderflow { row: usize, col: usize },
    /// The sample index does not continue the processed stream.
    SampleIndexMismatch { expected: usize, got: usize },
}

impl std::fmt::Display for TrackerError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Model(e) => write!(f, "{e}"),
            Self::Math(e) => write!(f, "{e}"),
            Self::DivisionUnderflow { row, col } => {
                write!(f, "division underflow in subspace row {row}, column {col}")
            }
            Self::SampleIndexMismatch { expected, got } => {
                write!(f, "sample index mismatch: expected {expected}, got {got}")
            }
        }
    }
}

impl std::error::Error for TrackerError {}

impl From<ModelError> for TrackerError {
    fn from(e: ModelError) -> Self {
        Self::Model(e)
    }
}

impl From<MathError> for TrackerError {
    fn from(e: MathError) -> Self {
        Self::Math(e)
    }
}

/// Posterior of the projection coefficients for one sample.
#[derive(Debug, Clone)]
pub struct CoefficientEstimate {
    /// Posterior mean (length `L`).
    pub x_mean: DVector<f64>,
    /// Posterior covariance (`L x L`, symmetric positive definite).
    pub x_cov: DMatrix<f64>,
    /// Second moment `x_cov + x_mean x_mean^T`, the quantity absorbed by the
    /// recursive statistics.
    pub second_moment: DMatrix<f64>,
}

/// Exponentially weighted accumulators that replace the data history.
///
/// `T` and `Q` decay eagerly each step. The per-row matrices `P_k` are kept
/// in a lazily decayed form: `p_base[k]` holds the matrix as of the step in
/// `p_age[k]`, and the true value at step `n` is `lambda^(n - age) * base`.
/// A row is rebased (the pending power applied and the fresh second moment
/// added) whenever it is observed, and `rebase_all` materializes every row,
/// which checkpointing does before serializing.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    t: DMatrix<f64>,
    q: DMatrix<f64>,
    p_base: Vec<DMatrix<f64>>,
    p_age: Vec<u64>,
    d: DVector<f64>,
    step: u64,
    lambda: f64,
}

impl SufficientStats {
    pub fn zeros(dims: ModelDims, lambda: f64) -> Self {
        Self {
            t: DMatrix::zeros(dims.l, dims.k),
            q: DMatrix::zeros(dims.l, dims.l),
            p_base: vec![DMatrix::zeros(dims.l, dims.l); dims.k],
            p_age: vec![0; dims.k],
            d: DVector::zeros(dims.k),
            step: 0,
            lambda,
        }
    }

    /// Rebuilds statistics from materialized values (checkpoint load). The
    /// supplied `p` matrices must be current as of `step`.
    pub fn from_parts(
        t: DMatrix<f64>,
        q: DMatrix<f64>,
        p: Vec<DMatrix<f64>>,
        d: DVector<f64>,
        step: u64,
        lambda: f64,
    ) -> Self {
        let k = p.len();
        Self { t, q, p_base: p, p_age: vec![step; k], d, step, lambda }
    }

    /// Cross-correlation between coefficients and observations (`L x K`).
    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    /// Weighted coefficient second moment (`L x L`).
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Weighted observed energy per coordinate (length `K`).
    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    /// Number of samples absorbed.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Materialized per-row masked coefficient moment matrix `P_k`.
    pub fn p(&self, k: usize) -> DMatrix<f64> {
        let scale = self.p_scale(k);
        &self.p_base[k] * scale
    }

    /// Pending decay factor of row `k`.
    fn p_scale(&self, k: usize) -> f64 {
        self.lambda.powi((self.step - self.p_age[k]) as i32)
    }

    /// Applies every pending decay so `p_base[k]` equals `P_k(step)` for all
    /// rows. Idempotent.
    pub fn rebase_all(&mut self) {
        for k in 0..self.p_base.len() {
            if self.p_age[k] != self.step {
                let scale = self.p_scale(k);
                self.p_base[k] *= scale;
                self.p_age[k] = self.step;
            }
        }
    }

    /// Absorbs one sample: `T <- lambda T + x z^T`, `Q <- lambda Q + M`,
    /// `d_k <- lambda d_k + z_k^2`, and `P_k <- lambda P_k + M` for observed
    /// rows, with `M` the coefficient second moment. Returns the flop count.
    fn absorb(&mut self, sample: &StreamSample, coeff: &CoefficientEstimate) -> u64 {
        let l = self.q.nrows();
        let k_dim = self.d.len();
        self.step += 1;
        let mut flops = 0u64;

        self.t *= self.lambda;
        self.q *= self.lambda;
        self.q += &coeff.second_moment;
        self.d *= self.lambda;
        flops += (k_dim * l + 2 * l * l + k_dim) as u64;

        for k in 0..k_dim {
            if sample.phi[k] == 1.0 {
                let zk = sample.z[k];
                let mut col = self.t.column_mut(k);
                for a in 0..l {
                    col[a] += coeff.x_mean[a] * zk;
                }
                self.d[k] += zk * zk;
                flops += (2 * l + 2) as u64;

                let pending = self.step - self.p_age[k];
                if pending > 0 {
                    let scale = self.lambda.powi(pending as i32);
                    self.p_base[k] *= scale;
                    self.p_age[k] = self.step;
                    flops += l as u64 * l as u64 + POWI_FLOPS;
                }
                self.p_base[k] += &coeff.second_moment;
                flops += (l * l) as u64;
            }
        }
        flops
    }
}

/// Counters for numerically degenerate events survived by clamping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Times the noise-precision denominator was clamped at the floor.
    pub beta_denominator_clamps: u64,
    /// Times the coefficient-covariance factorization needed the jitter
    /// retry.
    pub spd_jitter_retries: u64,
}

/// All time-varying state of the streaming tracker.
///
/// The subspace matrices (`K x L` in the model) are stored transposed
/// (`L x K`) so each subspace row is a contiguous column in memory; the
/// public accessors return the model orientation. A snapshot is plain data
/// and safe to send across threads for read-only metric evaluation.
#[derive(Debug, Clone)]
pub struct TrackerState {
    /// Subspace element means, stored `L x K`.
    w: DMatrix<f64>,
    /// Subspace element variances, stored `L x K`.
    w_var: DMatrix<f64>,
    /// Per-element scales, stored `L x K`; all ones in non-sparse mode.
    gamma: DMatrix<f64>,
    /// Per-element scale hyperparameters, stored `L x K`.
    rho: DMatrix<f64>,
    /// Shared column scales (length `L`).
    s: DVector<f64>,
    /// Column-scale hyperparameters (length `L`).
    delta: DVector<f64>,
    /// Noise precision.
    beta: f64,
    stats: SufficientStats,
    dims: ModelDims,
    hp: HyperParams,
    /// Samples processed.
    n: u64,
    /// Per-row `sum_l sigma^2_kl * r_kll` cached by the subspace update for
    /// the noise update, so the noise formula sees the row system of this
    /// step even after the scales move on.
    sigma_r_cache: DVector<f64>,
    diagnostics: Diagnostics,
    inner_sweeps: usize,
    flops: u64,
    last_step_flops: u64,
}

/// Result of processing one sample.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub coefficients: CoefficientEstimate,
    /// Reconstruction over all coordinates, observed and missing.
    pub reconstruction: DVector<f64>,
}

impl TrackerState {
    /// Fresh state: subspace entries i.i.d. `N(0, 1/K)` from the seeded
    /// generator (drawn row-major over the `K x L` matrix), element
    /// variances at the same `1/K` scale as the mean draw, unit scales,
    /// zeroed statistics.
    ///
    /// The variance init must match the mean scale: at variance 1 the first
    /// coefficient inference is over-regularized by a factor of the number
    /// of observed entries, which collapses the subspace estimate and, with
    /// element sparsity enabled, locks in a self-reinforcing shrinkage.
    pub fn new(dims: ModelDims, hp: HyperParams, seed: u64) -> Result<Self, TrackerError> {
        hp.validate()?;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let normal = Normal::new(0.0, (1.0 / dims.k as f64).sqrt()).expect("valid std");
        let mut w = DMatrix::zeros(dims.l, dims.k);
        for k in 0..dims.k {
            for l in 0..dims.l {
                w[(l, k)] = normal.sample(&mut rng);
            }
        }
        Ok(Self {
            w,
            w_var: DMatrix::from_element(dims.l, dims.k, 1.0 / dims.k as f64),
            gamma: DMatrix::from_element(dims.l, dims.k, 1.0),
            rho: DMatrix::from_element(dims.l, dims.k, 1.0),
            s: DVector::from_element(dims.l, 1.0),
            delta: DVector::from_element(dims.l, 1.0),
            beta: 1.0,
            stats: SufficientStats::zeros(dims, hp.lambda),
            dims,
            hp,
            n: 0,
            sigma_r_cache: DVector::zeros(dims.k),
            diagnostics: Diagnostics::default(),
            inner_sweeps: 1,
            flops: 0,
            last_step_flops: 0,
        })
    }

    /// Rebuilds a tracker from materialized parts (checkpoint load). Matrix
    /// arguments use the model orientation (`K x L`).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        dims: ModelDims,
        hp: HyperParams,
        w_mean: DMatrix<f64>,
        w_var: DMatrix<f64>,
        gamma: DMatrix<f64>,
        rho: DMatrix<f64>,
        s: DVector<f64>,
        delta: DVector<f64>,
        beta: f64,
        stats: SufficientStats,
        n: u64,
    ) -> Result<Self, TrackerError> {
        hp.validate()?;
        for (name, m) in [("w_mean", &w_mean), ("w_var", &w_var), ("gamma", &gamma), ("rho", &rho)]
        {
            if m.nrows() != dims.k || m.ncols() != dims.l {
                return Err(TrackerError::Model(ModelError::InvalidParameter(format!(
                    "{name} must be {}x{}, got {}x{}",
                    dims.k,
                    dims.l,
                    m.nrows(),
                    m.ncols()
                ))));
            }
        }
        if s.len() != dims.l || delta.len() != dims.l {
            return Err(TrackerError::Model(ModelError::DimensionMismatch {
                expected: dims.l,
                got: s.len(),
            }));
        }
        if stats.step != n {
            return Err(TrackerError::SampleIndexMismatch {
                expected: n as usize,
                got: stats.step as usize,
            });
        }
        Ok(Self {
            w: w_mean.transpose(),
            w_var: w_var.transpose(),
            gamma: gamma.transpose(),
            rho: rho.transpose(),
            s,
            delta,
            beta,
            stats,
            dims,
            hp,
            n,
            sigma_r_cache: DVector::zeros(dims.k),
            diagnostics: Diagnostics::default(),
            inner_sweeps: 1,
            flops: 0,
            last_step_flops: 0,
        })
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn hp(&self) -> &HyperParams {
        &self.hp
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn s(&self) -> &DVector<f64> {
        &self.s
    }

    pub fn delta(&self) -> &DVector<f64> {
        &self.delta
    }

    pub fn stats(&self) -> &SufficientStats {
        &self.stats
    }

    pub fn diagnostics(&self) -> Diagnostics {
        self.diagnostics
    }

    /// Extra coordinate sweeps per observed row per step (default 1).
    pub fn set_inner_sweeps(&mut self, sweeps: usize) {
        self.inner_sweeps = sweeps.max(1);
    }

    /// Subspace element means in model orientation (`K x L`).
    pub fn w_mean(&self) -> DMatrix<f64> {
        self.w.transpose()
    }

    /// Subspace element variances in model orientation (`K x L`).
    pub fn w_var(&self) -> DMatrix<f64> {
        self.w_var.transpose()
    }

    /// Per-element scales in model orientation (`K x L`).
    pub fn gamma(&self) -> DMatrix<f64> {
        self.gamma.transpose()
    }

    /// Per-element scale hyperparameters in model orientation (`K x L`).
    pub fn rho(&self) -> DMatrix<f64> {
        self.rho.transpose()
    }

    /// Euclidean norms of the subspace columns.
    pub fn column_norms(&self) -> DVector<f64> {
        DVector::from_iterator(self.dims.l, (0..self.dims.l).map(|l| self.w.row(l).norm()))
    }

    /// Count of columns whose norm exceeds `rel_threshold` times the largest
    /// column norm.
    pub fn effective_rank(&self, rel_threshold: f64) -> usize {
        metrics::effective_rank_from_norms(self.column_norms().as_slice(), rel_threshold)
    }

    /// Instrumented arithmetic-operation count of the last completed step.
    pub fn last_step_flops(&self) -> u64 {
        self.last_step_flops
    }

    /// Cumulative instrumented arithmetic-operation count.
    pub fn total_flops(&self) -> u64 {
        self.flops
    }

    /// Bytes of numeric state held; independent of the stream position.
    pub fn state_size_bytes(&self) -> usize {
        let ModelDims { k, l } = self.dims;
        let floats = 4 * k * l      // w, w_var, gamma, rho
            + 2 * l                 // s, delta
            + l * k                 // T
            + l * l                 // Q
            + k * l * l             // P_k
            + k                     // d
            + k                     // sigma_r cache
            + 2;                    // beta and spares
        floats * std::mem::size_of::<f64>() + k * std::mem::size_of::<u64>()
    }

    fn check_index(&self, sample: &StreamSample) -> Result<(), TrackerError> {
        if sample.index != self.n as usize + 1 {
            return Err(TrackerError::SampleIndexMismatch {
                expected: self.n as usize + 1,
                got: sample.index,
            });
        }
        Ok(())
    }

    /// Effective sample-window size entering the hyperparameter updates:
    /// `1/(1-lambda)`, or the true sample count when nothing is forgotten.
    fn window(&self) -> f64 {
        if self.hp.lambda == 1.0 {
            self.stats.step as f64
        } else {
            1.0 / (1.0 - self.hp.lambda)
        }
    }

    /// Posterior of the projection coefficients for the incoming sample,
    /// using the subspace of the previous step:
    /// `cov = beta^{-1} (W^T Phi W + sum_k phi_k Sigma_wk + S)^{-1}` and
    /// `mean = beta cov W^T z`. On a factorization failure a diagonal jitter
    /// of `1e-10 trace / L` is applied once before giving up.
    pub fn infer_coefficients(
        &mut self,
        sample: &StreamSample,
    ) -> Result<CoefficientEstimate, TrackerError> {
        validate_sample(sample, &self.dims)?;
        self.check_index(sample)?;
        let l = self.dims.l;
        let mut m = DMatrix::from_diagonal(&self.s);
        let mut wtz = DVector::zeros(l);
        let mut observed = 0u64;
        for k in 0..self.dims.k {
            if sample.phi[k] == 1.0 {
                observed += 1;
                let w_col = self.w.column(k);
                for a in 0..l {
                    for b in 0..l {
                        m[(a, b)] += w_col[a] * w_col[b];
                    }
                    m[(a, a)] += self.w_var[(a, k)];
                    wtz[a] += w_col[a] * sample.z[k];
                }
            }
        }
        self.flops += observed * (2 * l * l + 3 * l) as u64 + l as u64;

        let factor = match SpdFactor::new(&m) {
            Ok(f) => f,
            Err(MathError::NotPositiveDefinite) => {
                self.diagnostics.spd_jitter_retries += 1;
                let jitter = 1e-10 * m.trace() / l as f64;
                for a in 0..l {
                    m[(a, a)] += jitter;
                }
                SpdFactor::new(&m).map_err(TrackerError::Math)?
            }
            Err(e) => return Err(TrackerError::Math(e)),
        };
        let x_cov = factor.inverse() / self.beta;
        let x_mean = self.beta * (&x_cov * wtz);
        let second_moment = &x_cov + &x_mean * x_mean.transpose();
        self.flops += spd_factor_flops(l)
            + spd_inverse_flops(l)
            + (l * l) as u64          // covariance scaling
            + (2 * l * l + l) as u64  // mean
            + (2 * l * l) as u64;     // second moment
        Ok(CoefficientEstimate { x_mean, x_cov, second_moment })
    }

    /// Folds the sample and its coefficient posterior into the recursive
    /// statistics.
    pub fn update_statistics(&mut self, sample: &StreamSample, coeff: &CoefficientEstimate) {
        self.flops += self.stats.absorb(sample, coeff);
    }

    /// Cyclic coordinate sweep over the subspace rows observed this step.
    /// For each such row, in column order, the element variance is taken
    /// from the current row system `R_k = P_k + Gamma_k S` and the element
    /// mean re-solves its coordinate against the freshest neighbors:
    ///
    /// ```text
    /// sigma^2_kl = beta^{-1} / r_kll
    /// w_kl       = beta sigma^2_kl (t_lk - sum_{j != l} r_klj w_kj)
    /// ```
    ///
    /// Rows without an observation keep their posterior; the noise-update
    /// cache is refreshed for every row.
    pub fn update_subspace(&mut self, sample: &StreamSample) -> Result<(), TrackerError> {
        if self.stats.step != sample.index as u64 {
            return Err(TrackerError::SampleIndexMismatch {
                expected: self.stats.step as usize,
                got: sample.index,
            });
        }
        let l_dim = self.dims.l;
        let beta_prev = self.beta;
        for k in 0..self.dims.k {
            if sample.phi[k] == 1.0 {
                // Observed row: absorb() has rebased P_k to the current
                // step, so the base matrix is the live value.
                debug_assert_eq!(self.stats.p_age[k], self.stats.step);
                let mut sigma_r = 0.0;
                for _sweep in 0..self.inner_sweeps {
                    sigma_r = 0.0;
                    for l in 0..l_dim {
                        let p = &self.stats.p_base[k];
                        let r_ll = p[(l, l)] + self.gamma[(l, k)] * self.s[l];
                        if r_ll <= 1e-300 {
                            return Err(TrackerError::DivisionUnderflow { row: k, col: l });
                        }
                        let var = (1.0 / (beta_prev * r_ll)).clamp(SCALE_MIN, SCALE_MAX);
                        let mut cross = 0.0;
                        for j in 0..l_dim {
                            if j != l {
                                cross += p[(l, j)] * self.w[(j, k)];
                            }
                        }
                        self.w_var[(l, k)] = var;
                        self.w[(l, k)] = beta_prev * var * (self.stats.t[(l, k)] - cross);
                        sigma_r += var * r_ll;
                    }
                }
                self.sigma_r_cache[k] = sigma_r;
                self.flops +=
                    self.inner_sweeps as u64 * (l_dim * (2 * l_dim + 9)) as u64;
            } else {
                // Skipped row: refresh only the diagonal products the noise
                // update needs, with the lazily decayed statistics.
                let scale = self.stats.p_scale(k);
                let mut sigma_r = 0.0;
                for l in 0..l_dim {
                    let r_ll = scale * self.stats.p_base[k][(l, l)]
                        + self.gamma[(l, k)] * self.s[l];
                    sigma_r += self.w_var[(l, k)] * r_ll;
                }
                self.sigma_r_cache[k] = sigma_r;
                self.flops += POWI_FLOPS + (5 * l_dim) as u64;
            }
        }
        Ok(())
    }

    /// Per-element scale refresh over all rows; no-op in non-sparse mode.
    /// The hyperparameter moves first, from previous-step values, and the
    /// scale then reads the freshly swept element posterior together with
    /// the previous-step column scale and noise precision.
    pub fn update_element_scales(&mut self) -> Result<(), TrackerError> {
        if !self.hp.sparse_subspace {
            return Ok(());
        }
        let (psi, xi) = (self.hp.psi, self.hp.xi);
        for k in 0..self.dims.k {
            for l in 0..self.dims.l {
                let gamma_old = self.gamma[(l, k)];
                let rho_old = self.rho[(l, k)];
                let rho_new = (2.0 * (psi + 1.0) / (2.0 * xi + 1.0 / gamma_old + 1.0 / rho_old))
                    .clamp(SCALE_MIN, SCALE_MAX);
                let w = self.w[(l, k)];
                let second_moment = w * w + self.w_var[(l, k)];
                let a = self.beta * self.s[l] * second_moment;
                let gamma_new = gig_mean_half(a, rho_new)?.clamp(SCALE_MIN, SCALE_MAX);
                self.rho[(l, k)] = rho_new;
                self.gamma[(l, k)] = gamma_new;
            }
        }
        self.flops += (self.dims.k * self.dims.l * 12) as u64;
        Ok(())
    }

    /// Column-scale refresh: the hyperparameter recursion reads the
    /// previous-step scales, then each column scale balances the fresh
    /// weighted column energy (subspace means, variances, and coefficient
    /// second moment) against the new hyperparameter.
    pub fn update_column_scales(&mut self) -> Result<(), TrackerError> {
        let window = self.window();
        let k_dim = self.dims.k;
        for l in 0..self.dims.l {
            let s_old = self.s[l];
            let delta_old = self.delta[l];
            let delta_new = ((2.0 * self.hp.mu + window + k_dim as f64 + 1.0)
                / (2.0 * self.hp.nu + 1.0 / s_old + 1.0 / delta_old))
                .clamp(SCALE_MIN, SCALE_MAX);

            let mut energy = self.stats.q[(l, l)];
            for k in 0..k_dim {
                let w = self.w[(l, k)];
                energy += self.gamma[(l, k)] * (w * w + self.w_var[(l, k)]);
            }
            let a = self.beta * energy;
            let s_new = gig_mean_half(a, delta_new)?.clamp(SCALE_MIN, SCALE_MAX);
            self.delta[l] = delta_new;
            self.s[l] = s_new;
        }
        self.flops += (self.dims.l * (4 * k_dim + 14)) as u64;
        Ok(())
    }

    /// Noise-precision refresh from the per-row residual identities:
    ///
    /// ```text
    /// beta = (2 kappa + window (K + L) + K L) /
    ///        (2 theta + sum_k (d_k - w_k^T t_k + sigma_k^T r_k)
    ///                 + sum_l s_l q_ll)
    /// ```
    ///
    /// The bracketed row term is a residual and can transiently cancel below
    /// zero in floating point; the denominator is clamped at the floor and
    /// the event counted instead of aborting.
    pub fn update_noise_precision(&mut self) {
        let window = self.window();
        let ModelDims { k: k_dim, l: l_dim } = self.dims;
        let numer = 2.0 * self.hp.kappa + window * (k_dim + l_dim) as f64 + (k_dim * l_dim) as f64;
        let mut denom = 2.0 * self.hp.theta;
        for k in 0..k_dim {
            let mut wt = 0.0;
            for l in 0..l_dim {
                wt += self.w[(l, k)] * self.stats.t[(l, k)];
            }
            denom += self.stats.d[k] - wt + self.sigma_r_cache[k];
        }
        for l in 0..l_dim {
            denom += self.s[l] * self.stats.q[(l, l)];
        }
        if denom < SCALE_MIN {
            denom = SCALE_MIN;
            self.diagnostics.beta_denominator_clamps += 1;
        }
        self.beta = (numer / denom).clamp(SCALE_MIN, SCALE_MAX);
        self.flops += (k_dim * (2 * l_dim + 3) + 3 * l_dim + 8) as u64;
    }

    /// Processes one sample end to end and returns the coefficient posterior
    /// and the full-vector reconstruction `W(n) x(n)`.
    pub fn step(&mut self, sample: &StreamSample) -> Result<StepOutcome, TrackerError> {
        let flops_at_entry = self.flops;
        let coefficients = self.infer_coefficients(sample)?;
        self.update_statistics(sample, &coefficients);
        self.update_subspace(sample)?;
        self.update_element_scales()?;
        self.update_column_scales()?;
        self.update_noise_precision();

        let mut reconstruction = DVector::zeros(self.dims.k);
        reconstruction.gemv_tr(1.0, &self.w, &coefficients.x_mean, 0.0);
        self.flops += (2 * self.dims.k * self.dims.l) as u64;

        self.n += 1;
        self.last_step_flops = self.flops - flops_at_entry;
        Ok(StepOutcome { coefficients, reconstruction })
    }

    /// Materializes every lazily decayed statistic in place. Called before
    /// serializing so the stored matrices are the live values and a resumed
    /// run continues bit-identically.
    pub fn rebase_stats(&mut self) {
        self.stats.rebase_all();
    }
}
