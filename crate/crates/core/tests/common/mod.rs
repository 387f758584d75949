//! Shared oracles for the integration tests: numerical quadrature for the
//! generalized inverse Gaussian family and a pivoted-elimination linear
//! solver. These deliberately avoid the code paths they are used to check.

#![allow(dead_code)]

use nalgebra::DMatrix;

/// Adaptive Simpson quadrature on `[a, b]`, seeded with a fixed pre-split so
/// narrow peaks inside a wide bracket cannot be stepped over.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let panels = 64usize;
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let lo = a + i as f64 * width;
        let hi = lo + width;
        total += adaptive_simpson(f, lo, hi, tol / panels as f64, 60);
    }
    total
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let mid = 0.5 * (a + b);
    let whole = simpson(f, a, b);
    let left = simpson(f, a, mid);
    let right = simpson(f, mid, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adaptive_simpson(f, a, mid, tol / 2.0, depth - 1)
            + adaptive_simpson(f, mid, b, tol / 2.0, depth - 1)
    }
}

/// Log of `int_0^inf x^(c-1) exp(-(a x + b/x)/2) dx`, evaluated on the log
/// axis `x = e^t` where the integrand becomes `exp(c t - (a e^t + b e^-t)/2)`
/// and decays doubly exponentially in both directions.
pub fn log_gig_integral(c: f64, a: f64, b: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0);
    let h = |t: f64| c * t - 0.5 * (a * t.exp() + b * (-t).exp());
    // Stationary point: a u^2 - 2 c u - b = 0 with u = e^t, written in the
    // cancellation-free form.
    let u_star = b / ((c * c + a * b).sqrt() - c);
    let t_star = u_star.ln();
    let h_star = h(t_star);

    let mut lo = t_star;
    while h(lo) > h_star - 80.0 {
        lo -= 1.0;
    }
    let mut hi = t_star;
    while h(hi) > h_star - 80.0 {
        hi += 1.0;
    }
    let g = move |t: f64| (h(t) - h_star).exp();
    let integral = integrate(&g, lo, hi, 1e-12);
    h_star + integral.ln()
}

/// Mean of `GIG(p, a, b)` by quadrature: the normalizer cancels in the
/// moment ratio, so no Bessel function is needed.
pub fn gig_mean_quadrature(p: f64, a: f64, b: f64) -> f64 {
    (log_gig_integral(p + 1.0, a, b) - log_gig_integral(p, a, b)).exp()
}

/// Mean of the reciprocal under `GIG(p, a, b)` by quadrature.
pub fn gig_mean_reciprocal_quadrature(p: f64, a: f64, b: f64) -> f64 {
    (log_gig_integral(p - 1.0, a, b) - log_gig_integral(p, a, b)).exp()
}

/// Log of the marginalization integrand over the shared column scale,
/// integrated numerically: the two Gaussian factors and the inverse-Gamma
/// kernel of the scale, exactly as they multiply together before the scale
/// is integrated out. The s-dependent part collapses to the GIG(-1/2)
/// kernel with `a = beta * psi` and `b = delta` for any shape pair.
pub fn joint_prior_quadrature(
    x: &nalgebra::DVector<f64>,
    w: &nalgebra::DVector<f64>,
    delta: f64,
    beta: f64,
    gamma: &nalgebra::DVector<f64>,
    lambda: f64,
) -> f64 {
    let n = x.len();
    let k = w.len();
    let log_det_lambda = lambda.ln() * (n * (n - 1)) as f64 / 2.0;
    let log_det_gamma: f64 = gamma.iter().map(|g| g.ln()).sum();
    let x_weighted: f64 = x
        .iter()
        .enumerate()
        .map(|(i, &v)| lambda.powi((n - 1 - i) as i32) * v * v)
        .sum();
    let w_weighted: f64 = w.iter().zip(gamma.iter()).map(|(&v, &g)| g * v * v).sum();
    let psi = x_weighted + w_weighted;

    let log_c = -0.5 * (n + k) as f64 * (2.0 * std::f64::consts::PI).ln()
        + 0.5 * (n + k) as f64 * beta.ln()
        + 0.5 * (log_det_lambda + log_det_gamma);
    log_c + log_gig_integral(-0.5, beta * psi, delta)
}

/// Dense linear solve by Gaussian elimination with partial pivoting. Used
/// as the independent check of the Cholesky-based SPD path.
pub fn gauss_solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.nrows(), n);
    let mut aug = DMatrix::zeros(n, n + b.ncols());
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, b.ncols())).copy_from(b);

    for col in 0..n {
        let mut pivot_row = col;
        for r in (col + 1)..n {
            if aug[(r, col)].abs() > aug[(pivot_row, col)].abs() {
                pivot_row = r;
            }
        }
        if pivot_row != col {
            aug.swap_rows(pivot_row, col);
        }
        let pivot = aug[(col, col)];
        assert!(pivot.abs() > 0.0, "singular matrix in elimination oracle");
        for r in 0..n {
            if r != col {
                let factor = aug[(r, col)] / pivot;
                for c in col..(n + b.ncols()) {
                    let sub = factor * aug[(col, c)];
                    aug[(r, c)] -= sub;
                }
            }
        }
    }
    let mut x = DMatrix::zeros(n, b.ncols());
    for r in 0..n {
        for c in 0..b.ncols() {
            x[(r, c)] = aug[(r, n + c)] / aug[(r, r)];
        }
    }
    x
}

pub fn rel_err(value: f64, reference: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(1e-300)
}
