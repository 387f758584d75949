//! Closed-form distribution moments and dense SPD linear algebra shared by
//! both inference engines.
//!
//! The scale parameters of the model are a posteriori generalized inverse
//! Gaussian with order -1/2, the single order for which the moments reduce
//! to radicals:
//!
//! ```text
//! E[x]   = sqrt(b/a)                 for x ~ GIG(-1/2, a, b)
//! E[1/x] = sqrt(a/b) + 1/b
//! ```
//!
//! Only these closed forms live here; the general-order density is exercised
//! by a quadrature oracle in the test suite, keeping Bessel functions out of
//! the hot path.

use nalgebra::{DMatrix, DVector};

/// Lower bound below which a positive parameter is treated as degenerate.
pub const PARAM_MIN: f64 = 1e-300;
/// Upper bound above which a positive parameter is treated as overflowing.
pub const PARAM_MAX: f64 = 1e300;

#[derive(Debug, Clone, PartialEq)]
pub enum MathError {
    /// A parameter that must be strictly positive is zero, negative or NaN.
    NonpositiveParameter { name: &'static str, value: f64 },
    /// A parameter magnitude left the representable working range.
    ParameterOverflow { name: &'static str, value: f64 },
    /// A matrix expected to be symmetric positive definite failed to factor.
    NotPositiveDefinite,
    /// Mismatched operand dimensions.
    DimensionMismatch { expected: usize, got: usize },
}

impl std::fmt::Display for MathError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NonpositiveParameter { name, value } => {
                write!(f, "nonpositive parameter {name}: {value}")
            }
            Self::ParameterOverflow { name, value } => {
                write!(f, "parameter {name} out of range: {value}")
            }
            Self::NotPositiveDefinite => write!(f, "matrix is not positive definite"),
            Self::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
        }
    }
}

impl std::error::Error for MathError {}

fn check_positive(name: &'static str, value: f64) -> Result<(), MathError> {
    if !(value > 0.0) || value.is_nan() {
        return Err(MathError::NonpositiveParameter { name, value });
    }
    if !(PARAM_MIN..=PARAM_MAX).contains(&value) {
        return Err(MathError::ParameterOverflow { name, value });
    }
    Ok(())
}

/// Parameters of the one-dimensional generalized inverse Gaussian
/// distribution `GIG(p, a, b)` with `a, b > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigParams {
    pub p: f64,
    pub a: f64,
    pub b: f64,
}

impl GigParams {
    pub fn new(p: f64, a: f64, b: f64) -> Result<Self, MathError> {
        check_positive("a", a)?;
        check_positive("b", b)?;
        Ok(Self { p, a, b })
    }
}

/// Shape/rate parameters of a Gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self, MathError> {
        check_positive("shape", shape)?;
        check_positive("rate", rate)?;
        Ok(Self { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }
}

/// Mean of `GIG(-1/2, a, b)`: `sqrt(b/a)`.
pub fn gig_mean_half(a: f64, b: f64) -> Result<f64, MathError> {
    check_positive("a", a)?;
    check_positive("b", b)?;
    Ok((b / a).sqrt())
}

/// Mean of the reciprocal under `GIG(-1/2, a, b)`: `sqrt(a/b) + 1/b`.
///
/// Written as `1/gig_mean_half(a, b) + 1/b` so the identity
/// `E[1/x] = 1/E[x] + 1/b` holds bit-exactly by construction.
pub fn gig_mean_reciprocal_half(a: f64, b: f64) -> Result<f64, MathError> {
    Ok(1.0 / gig_mean_half(a, b)? + 1.0 / b)
}

/// Log density of the marginalized joint prior over one coefficient column
/// (length `n`, exponentially weighted) and one subspace column (length `K`,
/// scaled by the per-element parameters), with the shared column scale
/// integrated out:
///
/// ```text
/// log p(x, w | delta, beta, Gamma) =
///     -(n+K-1)/2 * log(2*pi) + (n+K)/2 * log(beta)
///     + 1/2 * (log|Lambda| + log|Gamma|) - 1/2 * log(delta)
///     - sqrt(beta * delta * (||x||^2_Lambda + ||w||^2_Gamma))
/// ```
///
/// where `||x||^2_Lambda = sum_i lambda^(n-i) x_i^2` and
/// `||w||^2_Gamma = sum_k gamma_k w_k^2`.
pub fn log_joint_prior(
    x_col: &DVector<f64>,
    w_col: &DVector<f64>,
    delta: f64,
    beta: f64,
    gamma_diag: &DVector<f64>,
    lambda: f64,
) -> Result<f64, MathError> {
    let n = x_col.len();
    let k = w_col.len();
    if n == 0 || k == 0 {
        return Err(MathError::DimensionMismatch { expected: 1, got: 0 });
    }
    if gamma_diag.len() != k {
        return Err(MathError::DimensionMismatch { expected: k, got: gamma_diag.len() });
    }
    check_positive("delta", delta)?;
    check_positive("beta", beta)?;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(MathError::NonpositiveParameter { name: "lambda", value: lambda });
    }
    for &g in gamma_diag.iter() {
        check_positive("gamma", g)?;
    }

    let ln_two_pi = (2.0 * std::f64::consts::PI).ln();
    // |Lambda| = lambda^(0 + 1 + ... + (n-1))
    let log_det_lambda = lambda.ln() * (n * (n - 1)) as f64 / 2.0;
    let log_det_gamma: f64 = gamma_diag.iter().map(|g| g.ln()).sum();
    let x_weighted: f64 = x_col
        .iter()
        .enumerate()
        .map(|(i, &x)| lambda.powi((n - 1 - i) as i32) * x * x)
        .sum();
    let w_weighted: f64 = w_col
        .iter()
        .zip(gamma_diag.iter())
        .map(|(&w, &g)| g * w * w)
        .sum();

    Ok(-0.5 * (n + k - 1) as f64 * ln_two_pi
        + 0.5 * (n + k) as f64 * beta.ln()
        + 0.5 * (log_det_lambda + log_det_gamma)
        - 0.5 * delta.ln()
        - (beta * delta * (x_weighted + w_weighted)).sqrt())
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
}

impl SpdFactor {
    /// Factors `A = L L^T`, reading only the lower triangle of `a`.
    /// Fails with `NotPositiveDefinite` on a nonpositive or non-finite pivot.
    pub fn new(a: &DMatrix<f64>) -> Result<Self, MathError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(MathError::DimensionMismatch { expected: n, got: a.ncols() });
        }
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(MathError::NotPositiveDefinite);
            }
            let pivot = diag.sqrt();
            l[(j, j)] = pivot;
            for i in (j + 1)..n {
                let mut sum = a[(i, j)];
                for k in 0..j {
                    sum -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = sum / pivot;
            }
        }
        Ok(Self { lower: l })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `A x = b` by forward and back substitution.
    pub fn solve_vector(&self, b: &DVector<f64>) -> Result<DVector<f64>, MathError> {
        let n = self.dim();
        if b.len() != n {
            return Err(MathError::DimensionMismatch { expected: n, got: b.len() });
        }
        let l = &self.lower;
        let mut y = b.clone();
        for i in 0..n {
            for k in 0..i {
                let t = l[(i, k)] * y[k];
                y[i] -= t;
            }
            y[i] /= l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let t = l[(k, i)] * y[k];
                y[i] -= t;
            }
            y[i] /= l[(i, i)];
        }
        Ok(y)
    }

    /// Solves `A X = B` columnwise.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>, MathError> {
        let n = self.dim();
        if b.nrows() != n {
            return Err(MathError::DimensionMismatch { expected: n, got: b.nrows() });
        }
        let mut x = DMatrix::zeros(n, b.ncols());
        for c in 0..b.ncols() {
            let col = self.solve_vector(&DVector::from_column_slice(b.column(c).as_slice()))?;
            x.set_column(c, &col);
        }
        Ok(x)
    }

    /// Symmetric inverse `A^{-1} = L^{-T} L^{-1}`, mirrored so the result is
    /// exactly symmetric.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let l = &self.lower;
        // Forward-substitute Y = L^{-1} (lower triangular).
        let mut y = DMatrix::zeros(n, n);
        for c in 0..n {
            y[(c, c)] = 1.0 / l[(c, c)];
            for i in (c + 1)..n {
                let mut sum = 0.0;
                for k in c..i {
                    sum += l[(i, k)] * y[(k, c)];
                }
                y[(i, c)] = -sum / l[(i, i)];
            }
        }
        // A^{-1}[i, j] = sum_{k >= max(i,j)} Y[k, i] * Y[k, j]
        let mut inv = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = 0.0;
                for k in i..n {
                    sum += y[(k, i)] * y[(k, j)];
                }
                inv[(i, j)] = sum;
                inv[(j, i)] = sum;
            }
        }
        inv
    }
}

/// Solves `A X = B` for symmetric positive-definite `A` via Cholesky.
pub fn spd_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>, MathError> {
    SpdFactor::new(a)?.solve_matrix(b)
}

/// Arithmetic-operation count of `SpdFactor::new` for an `n x n` matrix,
/// used by the tracker's per-step cost instrumentation.
pub fn spd_factor_flops(n: usize) -> u64 {
    // Column j: diagonal costs 2j+1, each of the (n-j-1) subdiagonal
    // entries costs 2j+1.
    (0..n).map(|j| ((n - j) * (2 * j + 1)) as u64).sum()
}

/// Arithmetic-operation count of `SpdFactor::inverse`.
pub fn spd_inverse_flops(n: usize) -> u64 {
    let forward: u64 = (0..n).map(|c| (1 + (n - c - 1) * (n - c)) as u64).sum();
    let symmetric: u64 = (0..n).map(|i| ((i + 1) * 2 * (n - i)) as u64).sum();
    forward + symmetric
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gig_mean_half_closed_forms() {
        assert_eq!(gig_mean_half(4.0, 1.0).unwrap(), 0.5);
        assert_eq!(gig_mean_half(1.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn gig_mean_reciprocal_closed_forms() {
        assert_eq!(gig_mean_reciprocal_half(4.0, 1.0).unwrap(), 3.0);
        assert_eq!(gig_mean_reciprocal_half(1.0, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn gig_reciprocal_identity_is_exact() {
        for &(a, b) in &[(0.001, 37.0), (2.7, 0.3), (512.3, 1e3), (1e-3, 1e-3)] {
            let lhs = gig_mean_reciprocal_half(a, b).unwrap();
            let rhs = 1.0 / gig_mean_half(a, b).unwrap() + 1.0 / b;
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn gig_rejects_bad_parameters() {
        assert!(matches!(
            gig_mean_half(0.0, 1.0),
            Err(MathError::NonpositiveParameter { name: "a", .. })
        ));
        assert!(matches!(
            gig_mean_half(1.0, -2.0),
            Err(MathError::NonpositiveParameter { name: "b", .. })
        ));
        assert!(matches!(
            gig_mean_half(1e-301, 1.0),
            Err(MathError::ParameterOverflow { .. })
        ));
        assert!(matches!(
            gig_mean_half(1.0, 1e301),
            Err(MathError::ParameterOverflow { .. })
        ));
        assert!(gig_mean_half(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn gig_params_validation() {
        assert!(GigParams::new(-0.5, 1.0, 2.0).is_ok());
        assert!(GigParams::new(-0.5, 0.0, 2.0).is_err());
        let g = GammaParams::new(3.0, 2.0).unwrap();
        assert_eq!(g.mean(), 1.5);
        assert!(GammaParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn log_joint_prior_zero_argument() {
        // With x = w = 0 and unit scales the exponential factor vanishes and
        // only the (2*pi)^{-(n+K-1)/2} normalizer survives.
        let v = log_joint_prior(
            &DVector::from_vec(vec![0.0]),
            &DVector::from_vec(vec![0.0]),
            1.0,
            1.0,
            &DVector::from_vec(vec![1.0]),
            1.0,
        )
        .unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((v - expected).abs() < 1e-15, "{v} vs {expected}");
    }

    #[test]
    fn log_joint_prior_beta_scaling() {
        // Doubling beta shifts the value by (n+K)/2*ln(2) and rescales the
        // square-root penalty term by sqrt(2).
        let x = DVector::from_vec(vec![0.3, -1.2]);
        let w = DVector::from_vec(vec![0.7, 0.1]);
        let gamma = DVector::from_vec(vec![1.0, 1.0]);
        let (delta, beta, lambda) = (2.0, 3.0, 0.9);
        let v1 = log_joint_prior(&x, &w, delta, beta, &gamma, lambda).unwrap();
        let v2 = log_joint_prior(&x, &w, delta, 2.0 * beta, &gamma, lambda).unwrap();
        let psi: f64 = 0.9f64.powi(1) * 0.09 + 1.44 + (0.49 + 0.01);
        let expected_shift = 2.0 * std::f64::consts::LN_2
            - (2.0 * beta * delta * psi).sqrt()
            + (beta * delta * psi).sqrt();
        assert!(((v2 - v1) - expected_shift).abs() < 1e-12);
    }

    #[test]
    fn log_joint_prior_rejects_bad_inputs() {
        let x = DVector::from_vec(vec![0.0]);
        let w = DVector::from_vec(vec![0.0]);
        let g = DVector::from_vec(vec![1.0]);
        assert!(log_joint_prior(&x, &w, 0.0, 1.0, &g, 1.0).is_err());
        assert!(log_joint_prior(&x, &w, 1.0, -1.0, &g, 1.0).is_err());
        assert!(log_joint_prior(&x, &w, 1.0, 1.0, &g, 1.2).is_err());
        let bad_g = DVector::from_vec(vec![-1.0]);
        assert!(log_joint_prior(&x, &w, 1.0, 1.0, &bad_g, 1.0).is_err());
    }

    #[test]
    fn spd_solve_identity_and_diagonal() {
        let eye = DMatrix::<f64>::identity(2, 2);
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let x = spd_solve(&eye, &b).unwrap();
        assert_eq!(x, b);

        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let b = DMatrix::from_column_slice(2, 1, &[2.0, 4.0]);
        let x = spd_solve(&d, &b).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((x[(1, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spd_solve_rejects_indefinite() {
        let a = DMatrix::from_column_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            spd_solve(&a, &DMatrix::identity(2, 2)),
            Err(MathError::NotPositiveDefinite)
        ));
    }

    #[test]
    fn spd_inverse_is_symmetric_and_correct() {
        // A = M M^T + I is SPD for any M.
        let m = DMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
        let a = &m * m.transpose() + DMatrix::identity(5, 5);
        let inv = SpdFactor::new(&a).unwrap().inverse();
        assert_eq!(inv, inv.transpose());
        let prod = &a * &inv;
        let err = (&prod - DMatrix::identity(5, 5)).norm();
        assert!(err < 1e-12, "residual {err}");
    }
}
