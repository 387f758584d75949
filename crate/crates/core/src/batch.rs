//! Batch variational Bayes inference over a fixed dataset window.
//!
//! The posterior is fully factorized: one Gaussian per coefficient vector,
//! one Gaussian per subspace-matrix element, generalized inverse Gaussian
//! column and element scales, and Gamma factors for their hyperparameters
//! and the noise precision. Minimizing the KL divergence couples the factor
//! parameters, so the engine cycles coefficient, subspace, column-scale,
//! element-scale and noise updates until the subspace mean settles.
//!
//! This engine is the in-memory reference; the streaming tracker reproduces
//! its updates through fixed-size recursive statistics.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::bayes::{gig_mean_half, MathError, SpdFactor};
use crate::model::{BatchDataset, HyperParams, ModelError};

/// Scale parameters are clamped to this range after every update. Column
/// scales are designed to diverge for pruned columns; the clamp caps them
/// without changing which columns die.
pub const SCALE_MIN: f64 = 1e-12;
pub const SCALE_MAX: f64 = 1e12;

/// Default convergence tolerance on the relative subspace change.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default iteration budget.
pub const DEFAULT_MAX_ITERS: usize = 500;

fn clamp_scale(v: f64) -> f64 {
    v.clamp(SCALE_MIN, SCALE_MAX)
}

#[derive(Debug, Clone, PartialEq)]
pub enum BatchError {
    Math(MathError),
    Model(ModelError),
    /// The precision term of a subspace element collapsed to zero.
    DivisionUnderflow { row: usize, col: usize },
    /// The noise-precision denominator went nonpositive.
    NonpositiveDenominator,
}

impl std::fmt::Display for BatchError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Math(e) => write!(f, "{e}"),
            Self::Model(e) => write!(f, "{e}"),
            Self::DivisionUnderflow { row, col } => {
                write!(f, "division underflow updating subspace element ({row}, {col})")
            }
            Self::NonpositiveDenominator => write!(f, "nonpositive noise-precision denominator"),
        }
    }
}

impl std::error::Error for BatchError {}

impl From<MathError> for BatchError {
    fn from(e: MathError) -> Self {
        Self::Math(e)
    }
}

impl From<ModelError> for BatchError {
    fn from(e: ModelError) -> Self {
        Self::Model(e)
    }
}

/// Variational-factor parameters over a fixed window of `n` samples.
#[derive(Debug, Clone)]
pub struct BatchPosterior {
    /// Coefficient means, one row per sample (`n x L`).
    pub x_mean: DMatrix<f64>,
    /// Per-sample coefficient covariances (`n` matrices of `L x L`).
    pub x_cov: Vec<DMatrix<f64>>,
    /// Subspace-matrix element means (`K x L`).
    pub w_mean: DMatrix<f64>,
    /// Subspace-matrix element variances (`K x L`).
    pub w_var: DMatrix<f64>,
    /// Column scales (length `L`).
    pub s: DVector<f64>,
    /// Column-scale hyperparameter means (length `L`).
    pub delta: DVector<f64>,
    /// Element scales (`K x L`); all ones when element sparsity is off.
    pub gamma: DMatrix<f64>,
    /// Element-scale hyperparameter means (`K x L`).
    pub rho: DMatrix<f64>,
    /// Noise-precision mean.
    pub beta: f64,
}

impl BatchPosterior {
    /// Scale-neutral starting point: subspace entries drawn i.i.d. from
    /// `N(0, 1/K)`, unit variances and scales, unit noise precision.
    pub fn init(n: usize, k: usize, l: usize, seed: u64) -> Self {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let normal = Normal::new(0.0, (1.0 / k as f64).sqrt()).expect("valid std");
        let mut w_mean = DMatrix::zeros(k, l);
        for row in 0..k {
            for col in 0..l {
                w_mean[(row, col)] = normal.sample(&mut rng);
            }
        }
        Self {
            x_mean: DMatrix::zeros(n, l),
            x_cov: vec![DMatrix::identity(l, l); n],
            w_mean,
            w_var: DMatrix::from_element(k, l, 1.0),
            s: DVector::from_element(l, 1.0),
            delta: DVector::from_element(l, 1.0),
            gamma: DMatrix::from_element(k, l, 1.0),
            rho: DMatrix::from_element(k, l, 1.0),
            beta: 1.0,
        }
    }

    /// Rank-`L` reconstruction of the clean data window, `x_mean * w_mean^T`.
    pub fn reconstruction(&self) -> DMatrix<f64> {
        &self.x_mean * self.w_mean.transpose()
    }
}

/// Exponential weight of sample `i` (0-based) in a window of `n`.
#[inline]
fn weight(lambda: f64, n: usize, i: usize) -> f64 {
    lambda.powi((n - 1 - i) as i32)
}

/// Refreshes every coefficient factor: for each sample the posterior
/// covariance inverts the masked subspace Gram matrix (with the element
/// variances entering through the mask) plus the column-scale diagonal,
/// and the mean is the matched ridge estimate of the projection.
pub fn batch_update_coefficients(
    data: &BatchDataset,
    post: &mut BatchPosterior,
    _hp: &HyperParams,
) -> Result<(), BatchError> {
    let l = post.w_mean.ncols();
    let k = post.w_mean.nrows();
    for (i, sample) in data.samples.iter().enumerate() {
        let mut m = DMatrix::from_diagonal(&post.s);
        for row in 0..k {
            if sample.phi[row] == 1.0 {
                let w_row = post.w_mean.row(row);
                for a in 0..l {
                    for b in 0..l {
                        m[(a, b)] += w_row[a] * w_row[b];
                    }
                    m[(a, a)] += post.w_var[(row, a)];
                }
            }
        }
        let inv = SpdFactor::new(&m)?.inverse();
        let sigma = &inv / post.beta;
        let wtz = post.w_mean.transpose() * &sample.z;
        let mean = post.beta * (&sigma * wtz);
        post.x_mean.row_mut(i).copy_from(&mean.transpose());
        post.x_cov[i] = sigma;
    }
    Ok(())
}

/// Weighted masked coefficient moments for row `k`:
/// `A_k = sum_i lambda^(n-i) phi_k(i) (x(i) x(i)^T + Sigma_x(i))` and the
/// weighted cross term `t_k = sum_i lambda^(n-i) x(i) z_k(i)`.
fn row_moments(
    data: &BatchDataset,
    post: &BatchPosterior,
    lambda: f64,
    k: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = data.len();
    let l = post.x_mean.ncols();
    let mut a = DMatrix::zeros(l, l);
    let mut t = DVector::zeros(l);
    for i in 0..n {
        let wgt = weight(lambda, n, i);
        let x_row = post.x_mean.row(i);
        if data.samples[i].phi[k] == 1.0 {
            for p in 0..l {
                for q in 0..l {
                    a[(p, q)] += wgt * (x_row[p] * x_row[q] + post.x_cov[i][(p, q)]);
                }
            }
        }
        // z is zero at masked positions, so the cross term needs no mask.
        let z = data.samples[i].z[k];
        if z != 0.0 {
            for p in 0..l {
                t[p] += wgt * x_row[p] * z;
            }
        }
    }
    (a, t)
}

/// One cyclic coordinate sweep over the subspace-matrix elements. Within a
/// row the variance of an element is computed first and its mean then uses
/// the same-cycle variance together with the freshest values of the other
/// row entries.
pub fn batch_update_subspace(
    data: &BatchDataset,
    post: &mut BatchPosterior,
    hp: &HyperParams,
) -> Result<(), BatchError> {
    let k_dim = post.w_mean.nrows();
    let l_dim = post.w_mean.ncols();
    for k in 0..k_dim {
        let (a, t) = row_moments(data, post, hp.lambda, k);
        for l in 0..l_dim {
            let precision = a[(l, l)] + post.gamma[(k, l)] * post.s[l];
            if precision <= 1e-300 {
                return Err(BatchError::DivisionUnderflow { row: k, col: l });
            }
            let var = 1.0 / (post.beta * precision);
            let mut cross = 0.0;
            for j in 0..l_dim {
                if j != l {
                    cross += a[(l, j)] * post.w_mean[(k, j)];
                }
            }
            post.w_var[(k, l)] = var;
            post.w_mean[(k, l)] = post.beta * var * (t[l] - cross);
        }
    }
    Ok(())
}

/// Refreshes the shared column scales and their hyperparameters. The scale
/// is the GIG(-1/2) mean of the weighted column energy; the hyperparameter
/// update reads the pre-update scale values.
pub fn batch_update_column_scales(
    post: &mut BatchPosterior,
    hp: &HyperParams,
    n: usize,
) -> Result<(), BatchError> {
    let k_dim = post.w_mean.nrows();
    let l_dim = post.w_mean.ncols();
    for l in 0..l_dim {
        let s_old = post.s[l];
        let delta_old = post.delta[l];

        let mut w_energy = 0.0;
        for k in 0..k_dim {
            let w = post.w_mean[(k, l)];
            w_energy += post.gamma[(k, l)] * (w * w + post.w_var[(k, l)]);
        }
        let mut x_energy = 0.0;
        for i in 0..n {
            let x = post.x_mean[(i, l)];
            x_energy += weight(hp.lambda, n, i) * (x * x + post.x_cov[i][(l, l)]);
        }

        let a = post.beta * (w_energy + x_energy);
        post.s[l] = clamp_scale(gig_mean_half(a, delta_old)?);

        let inv_s_mean = 1.0 / s_old + 1.0 / delta_old;
        let numer = hp.mu + (n + k_dim + 1) as f64 / 2.0;
        post.delta[l] = clamp_scale(numer / (hp.nu + inv_s_mean / 2.0));
    }
    Ok(())
}

/// Refreshes the per-element scales and their hyperparameters. A no-op when
/// element sparsity is disabled, leaving the scale matrix pinned at 1.
pub fn batch_update_element_scales(
    post: &mut BatchPosterior,
    hp: &HyperParams,
) -> Result<(), BatchError> {
    if !hp.sparse_subspace {
        return Ok(());
    }
    let k_dim = post.w_mean.nrows();
    let l_dim = post.w_mean.ncols();
    for k in 0..k_dim {
        for l in 0..l_dim {
            let gamma_old = post.gamma[(k, l)];
            let rho_old = post.rho[(k, l)];
            let w = post.w_mean[(k, l)];
            let second_moment = w * w + post.w_var[(k, l)];
            let a = post.beta * post.s[l] * second_moment;
            post.gamma[(k, l)] = clamp_scale(gig_mean_half(a, rho_old)?);

            let inv_gamma_mean = 1.0 / gamma_old + 1.0 / rho_old;
            post.rho[(k, l)] = clamp_scale((hp.psi + 1.0) / (hp.xi + inv_gamma_mean / 2.0));
        }
    }
    Ok(())
}

/// Refreshes the noise-precision mean from the full expected weighted
/// residual, its four trace/quadratic corrections, and the scale penalties.
pub fn batch_update_noise(
    data: &BatchDataset,
    post: &mut BatchPosterior,
    hp: &HyperParams,
) -> Result<(), BatchError> {
    let n = data.len();
    let k_dim = post.w_mean.nrows();
    let l_dim = post.w_mean.ncols();

    let mut theta_bar = hp.theta;
    for k in 0..k_dim {
        let w_row = post.w_mean.row(k).transpose();
        let mut residual = 0.0;
        let mut trace_w = 0.0;
        let mut quad_x = 0.0;
        let mut trace_x = 0.0;
        for i in 0..n {
            let wgt = weight(hp.lambda, n, i);
            let x_row = post.x_mean.row(i);
            let fit = x_row.dot(&w_row.transpose());
            if data.samples[i].phi[k] == 1.0 {
                let r = data.samples[i].z[k] - fit;
                residual += wgt * r * r;
                for l in 0..l_dim {
                    trace_w += wgt * post.w_var[(k, l)] * x_row[l] * x_row[l];
                    trace_x += wgt * post.w_var[(k, l)] * post.x_cov[i][(l, l)];
                }
                let mut q = 0.0;
                for p in 0..l_dim {
                    for qx in 0..l_dim {
                        q += w_row[p] * post.x_cov[i][(p, qx)] * w_row[qx];
                    }
                }
                quad_x += wgt * q;
            } else {
                // Masked residual is exactly zero under the stored-zero
                // convention; nothing accumulates.
                debug_assert_eq!(data.samples[i].z[k], 0.0);
            }
        }
        let mut penalty = 0.0;
        for l in 0..l_dim {
            let w = post.w_mean[(k, l)];
            penalty += post.s[l] * post.gamma[(k, l)] * (w * w + post.w_var[(k, l)]);
        }
        theta_bar += residual + trace_w + quad_x + trace_x + penalty;
    }
    for l in 0..l_dim {
        let mut x_energy = 0.0;
        for i in 0..n {
            let x = post.x_mean[(i, l)];
            x_energy += weight(hp.lambda, n, i) * (x * x + post.x_cov[i][(l, l)]);
        }
        theta_bar += post.s[l] * x_energy;
    }

    if theta_bar <= 0.0 || !theta_bar.is_finite() {
        return Err(BatchError::NonpositiveDenominator);
    }
    let kappa_bar = hp.kappa + (n * (k_dim + l_dim) + k_dim * l_dim) as f64 / 2.0;
    post.beta = clamp_scale(kappa_bar / theta_bar);
    Ok(())
}

/// Outcome of a full batch fit.
#[derive(Debug, Clone)]
pub struct BatchFitOutcome {
    pub posterior: BatchPosterior,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs the full cyclic scheme until the largest relative change of a
/// subspace-mean entry falls below `tol` or `max_iters` cycles elapse.
/// Deterministic for fixed inputs and seed.
pub fn batch_fit(
    data: &BatchDataset,
    hp: &HyperParams,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<BatchFitOutcome, BatchError> {
    hp.validate()?;
    let n = data.len();
    let mut post = BatchPosterior::init(n, data.dims.k, data.dims.l, seed);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        let w_prev = post.w_mean.clone();
        batch_update_coefficients(data, &mut post, hp)?;
        batch_update_subspace(data, &mut post, hp)?;
        batch_update_column_scales(&mut post, hp, n)?;
        batch_update_element_scales(&mut post, hp)?;
        batch_update_noise(data, &mut post, hp)?;
        iterations += 1;

        let mut rel_change: f64 = 0.0;
        for (new, old) in post.w_mean.iter().zip(w_prev.iter()) {
            rel_change = rel_change.max((new - old).abs() / (1e-12 + new.abs()));
        }
        if rel_change < tol {
            converged = true;
            break;
        }
    }
    Ok(BatchFitOutcome { posterior: post, iterations, converged })
}
