//! Oracles for the streaming tracker: recursive statistics against their
//! direct weighted-sum definitions, straight-line transcriptions of the
//! per-step updates, and the structural invariants (positive definiteness,
//! clamped scales, permutation equivariance, cost scaling).

mod common;

use nalgebra::{DMatrix, DVector};
use ovbs_core::model::{HyperParams, ModelDims, StreamSample};
use ovbs_core::online::{SufficientStats, TrackerState};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const SCALE_MIN: f64 = 1e-12;
const SCALE_MAX: f64 = 1e12;

fn hp(lambda: f64) -> HyperParams {
    HyperParams::with_forgetting(lambda, false).unwrap()
}

fn random_sample(rng: &mut Xoshiro256PlusPlus, k: usize, pi: f64, index: usize) -> StreamSample {
    let values: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let observed: Vec<bool> = (0..k).map(|_| rng.gen_bool(pi)).collect();
    StreamSample::from_observations(&values, &observed, index)
}

/// Runs a stream and checks the recursive statistics against the direct
/// exponentially weighted definitions over the recorded history.
fn check_statistics_equivalence(lambda: f64, pi: f64, seed: u64) {
    let dims = ModelDims::new(12, 4).unwrap();
    let mut state = TrackerState::new(dims, hp(lambda), seed).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0xabcd);
    let n = 80usize;

    let mut history = Vec::with_capacity(n);
    for i in 1..=n {
        let sample = random_sample(&mut rng, dims.k, pi, i);
        let outcome = state.step(&sample).unwrap();
        history.push((sample, outcome.coefficients));
    }

    let mut t_direct = DMatrix::zeros(dims.l, dims.k);
    let mut q_direct = DMatrix::zeros(dims.l, dims.l);
    let mut p_direct = vec![DMatrix::zeros(dims.l, dims.l); dims.k];
    let mut d_direct = DVector::zeros(dims.k);
    for (i, (sample, coeff)) in history.iter().enumerate() {
        let wgt = lambda.powi((n - 1 - i) as i32);
        for k in 0..dims.k {
            for l in 0..dims.l {
                t_direct[(l, k)] += wgt * coeff.x_mean[l] * sample.z[k];
            }
            d_direct[k] += wgt * sample.z[k] * sample.z[k];
            if sample.phi[k] == 1.0 {
                p_direct[k] += wgt * &coeff.second_moment;
            }
        }
        q_direct += wgt * &coeff.second_moment;
    }

    let stats = state.stats();
    let rel = |a: f64, b: f64| a / b.max(1e-12);
    assert!(
        rel((stats.t() - &t_direct).norm(), t_direct.norm()) < 1e-8,
        "T diverges (lambda={lambda}, pi={pi})"
    );
    assert!(
        rel((stats.q() - &q_direct).norm(), q_direct.norm()) < 1e-8,
        "Q diverges (lambda={lambda}, pi={pi})"
    );
    assert!(
        rel((stats.d() - &d_direct).norm(), d_direct.norm()) < 1e-8,
        "d diverges (lambda={lambda}, pi={pi})"
    );
    for k in 0..dims.k {
        let direct = &p_direct[k];
        let err = (stats.p(k) - direct).norm();
        assert!(
            rel(err, direct.norm()) < 1e-8,
            "P_{k} diverges (lambda={lambda}, pi={pi})"
        );
    }
}

#[test]
fn statistics_match_direct_definitions() {
    for (i, &lambda) in [0.9, 1.0].iter().enumerate() {
        for (j, &pi) in [0.3, 1.0].iter().enumerate() {
            check_statistics_equivalence(lambda, pi, 1000 + (i * 2 + j) as u64);
        }
    }
}

#[test]
fn coefficient_posterior_matches_dense_oracle() {
    let dims = ModelDims::new(8, 3).unwrap();
    let mut state = TrackerState::new(dims, hp(0.95), 31).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(77);
    for i in 1..=5 {
        let sample = random_sample(&mut rng, dims.k, 0.8, i);
        state.step(&sample).unwrap();
    }
    let sample = random_sample(&mut rng, dims.k, 0.8, 6);

    let w = state.w_mean();
    let w_var = state.w_var();
    let s = state.s().clone();
    let beta = state.beta();
    let coeff = state.infer_coefficients(&sample).unwrap();

    let phi = DMatrix::from_diagonal(&sample.phi);
    let mut gram = w.transpose() * &phi * &w;
    for k in 0..dims.k {
        if sample.phi[k] == 1.0 {
            for l in 0..dims.l {
                gram[(l, l)] += w_var[(k, l)];
            }
        }
    }
    gram += DMatrix::from_diagonal(&s);
    let inv = common::gauss_solve(&gram, &DMatrix::identity(dims.l, dims.l));
    let sigma = &inv / beta;
    let mean = beta * (&sigma * (w.transpose() * &sample.z));

    assert!((&coeff.x_cov - &sigma).norm() / sigma.norm() < 1e-10);
    assert!((&coeff.x_mean - &mean).norm() / mean.norm().max(1e-12) < 1e-10);
}

#[test]
fn subspace_sweep_matches_transcription_oracle() {
    // Fully observed sample so the sweep covers every row, as in the
    // per-sample procedure.
    let dims = ModelDims::new(5, 4).unwrap();
    let mut state = TrackerState::new(dims, hp(0.9), 404).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(405);
    for i in 1..=6 {
        let sample = random_sample(&mut rng, dims.k, 0.7, i);
        state.step(&sample).unwrap();
    }
    let sample = random_sample(&mut rng, dims.k, 1.0, 7);
    let coeff = state.infer_coefficients(&sample).unwrap();
    state.update_statistics(&sample, &coeff);

    // Start state for the oracle, captured after the statistics update.
    let w0 = state.w_mean();
    let gamma0 = state.gamma();
    let s0 = state.s().clone();
    let beta0 = state.beta();
    let t = state.stats().t().clone();
    let p: Vec<DMatrix<f64>> = (0..dims.k).map(|k| state.stats().p(k)).collect();

    state.update_subspace(&sample).unwrap();

    let mut w = w0.clone();
    let mut var = DMatrix::zeros(dims.k, dims.l);
    for k in 0..dims.k {
        for l in 0..dims.l {
            let r_ll = p[k][(l, l)] + gamma0[(k, l)] * s0[l];
            let sigma2 = (1.0 / (beta0 * r_ll)).clamp(SCALE_MIN, SCALE_MAX);
            let mut cross = 0.0;
            for j in 0..dims.l {
                if j != l {
                    cross += p[k][(l, j)] * w[(k, j)];
                }
            }
            var[(k, l)] = sigma2;
            w[(k, l)] = beta0 * sigma2 * (t[(l, k)] - cross);
        }
    }

    assert!((state.w_mean() - &w).norm() < 1e-12 * w.norm().max(1.0));
    assert!((state.w_var() - &var).norm() < 1e-12 * var.norm().max(1.0));
}

#[test]
fn partial_sweep_only_touches_observed_rows() {
    let dims = ModelDims::new(6, 3).unwrap();
    let mut state = TrackerState::new(dims, hp(0.9), 88).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(89);
    for i in 1..=4 {
        let sample = random_sample(&mut rng, dims.k, 0.8, i);
        state.step(&sample).unwrap();
    }
    let observed = [true, false, true, false, false, true];
    let values: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let sample = StreamSample::from_observations(&values, &observed, 5);

    let coeff = state.infer_coefficients(&sample).unwrap();
    state.update_statistics(&sample, &coeff);
    let w_before = state.w_mean();
    let gamma0 = state.gamma();
    let s0 = state.s().clone();
    let beta0 = state.beta();
    let t = state.stats().t().clone();
    let p: Vec<DMatrix<f64>> = (0..dims.k).map(|k| state.stats().p(k)).collect();

    state.update_subspace(&sample).unwrap();
    let w_after = state.w_mean();

    for k in 0..dims.k {
        if !observed[k] {
            for l in 0..dims.l {
                assert_eq!(w_after[(k, l)], w_before[(k, l)]);
            }
            continue;
        }
        // Observed rows follow the cyclic update.
        let mut row: Vec<f64> = (0..dims.l).map(|l| w_before[(k, l)]).collect();
        for l in 0..dims.l {
            let r_ll = p[k][(l, l)] + gamma0[(k, l)] * s0[l];
            let sigma2 = (1.0 / (beta0 * r_ll)).clamp(SCALE_MIN, SCALE_MAX);
            let mut cross = 0.0;
            for (j, &wj) in row.iter().enumerate() {
                if j != l {
                    cross += p[k][(l, j)] * wj;
                }
            }
            row[l] = beta0 * sigma2 * (t[(l, k)] - cross);
        }
        for l in 0..dims.l {
            assert!((w_after[(k, l)] - row[l]).abs() < 1e-12);
        }
    }
}

#[test]
fn scale_updates_match_transcription_oracle() {
    for lambda in [0.9, 1.0] {
        let dims = ModelDims::new(7, 3).unwrap();
        let mut h = hp(lambda);
        h.sparse_subspace = true;
        let mut state = TrackerState::new(dims, h, 600).unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(601);
        for i in 1..=5 {
            let sample = random_sample(&mut rng, dims.k, 0.75, i);
            state.step(&sample).unwrap();
        }
        let sample = random_sample(&mut rng, dims.k, 0.75, 6);
        let coeff = state.infer_coefficients(&sample).unwrap();
        state.update_statistics(&sample, &coeff);
        state.update_subspace(&sample).unwrap();

        // Previous-step scale quantities feeding the oracle.
        let gamma_prev = state.gamma();
        let rho_prev = state.rho();
        let s_prev = state.s().clone();
        let delta_prev = state.delta().clone();
        let beta_prev = state.beta();
        let w_n = state.w_mean();
        let var_n = state.w_var();
        let q = state.stats().q().clone();
        let n_now = state.stats().step();

        state.update_element_scales().unwrap();

        // rho first, then gamma from the fresh rho, per element.
        for k in 0..dims.k {
            for l in 0..dims.l {
                let rho_expected = (2.0 * (h.psi + 1.0)
                    / (2.0 * h.xi + 1.0 / gamma_prev[(k, l)] + 1.0 / rho_prev[(k, l)]))
                    .clamp(SCALE_MIN, SCALE_MAX);
                let second = w_n[(k, l)] * w_n[(k, l)] + var_n[(k, l)];
                let gamma_expected = (rho_expected
                    / (beta_prev * s_prev[l] * second))
                    .sqrt()
                    .clamp(SCALE_MIN, SCALE_MAX);
                assert!((state.rho()[(k, l)] - rho_expected).abs() / rho_expected < 1e-12);
                assert!((state.gamma()[(k, l)] - gamma_expected).abs() / gamma_expected < 1e-12);
            }
        }

        let gamma_n = state.gamma();
        state.update_column_scales().unwrap();

        let window = if lambda == 1.0 { n_now as f64 } else { 1.0 / (1.0 - lambda) };
        for l in 0..dims.l {
            let delta_expected = ((2.0 * h.mu + window + dims.k as f64 + 1.0)
                / (2.0 * h.nu + 1.0 / s_prev[l] + 1.0 / delta_prev[l]))
                .clamp(SCALE_MIN, SCALE_MAX);
            let mut energy = q[(l, l)];
            for k in 0..dims.k {
                let w = w_n[(k, l)];
                energy += gamma_n[(k, l)] * (w * w + var_n[(k, l)]);
            }
            let s_expected = ((delta_expected / (beta_prev * energy)).sqrt())
                .clamp(SCALE_MIN, SCALE_MAX);
            assert!((state.delta()[l] - delta_expected).abs() / delta_expected < 1e-12);
            assert!((state.s()[l] - s_expected).abs() / s_expected < 1e-12);
        }
    }
}

#[test]
fn noise_update_matches_transcription_oracle() {
    let dims = ModelDims::new(6, 3).unwrap();
    let lambda = 0.9;
    let mut state = TrackerState::new(dims, hp(lambda), 700).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(701);
    for i in 1..=5 {
        let sample = random_sample(&mut rng, dims.k, 0.7, i);
        state.step(&sample).unwrap();
    }
    let sample = random_sample(&mut rng, dims.k, 0.7, 6);
    let coeff = state.infer_coefficients(&sample).unwrap();
    state.update_statistics(&sample, &coeff);
    // The row system of this step carries the previous-step scales.
    let gamma_prev = state.gamma();
    let s_prev = state.s().clone();
    state.update_subspace(&sample).unwrap();
    state.update_element_scales().unwrap();
    state.update_column_scales().unwrap();

    let w_n = state.w_mean();
    let var_n = state.w_var();
    let s_n = state.s().clone();
    let t = state.stats().t().clone();
    let q = state.stats().q().clone();
    let d = state.stats().d().clone();
    let p: Vec<DMatrix<f64>> = (0..dims.k).map(|k| state.stats().p(k)).collect();
    let h = hp(lambda);

    state.update_noise_precision();

    let window = 1.0 / (1.0 - lambda);
    let numer = 2.0 * h.kappa + window * (dims.k + dims.l) as f64 + (dims.k * dims.l) as f64;
    let mut denom = 2.0 * h.theta;
    for k in 0..dims.k {
        let mut wt = 0.0;
        let mut sigma_r = 0.0;
        for l in 0..dims.l {
            wt += w_n[(k, l)] * t[(l, k)];
            let r_ll = p[k][(l, l)] + gamma_prev[(k, l)] * s_prev[l];
            sigma_r += var_n[(k, l)] * r_ll;
        }
        denom += d[k] - wt + sigma_r;
    }
    for l in 0..dims.l {
        denom += s_n[l] * q[(l, l)];
    }
    let beta_expected = (numer / denom.max(SCALE_MIN)).clamp(SCALE_MIN, SCALE_MAX);
    assert!(
        (state.beta() - beta_expected).abs() / beta_expected < 1e-12,
        "{} vs oracle {}",
        state.beta(),
        beta_expected
    );
}

#[test]
fn coefficient_covariance_stays_positive_definite_and_scales_bounded() {
    let dims = ModelDims::new(10, 4).unwrap();
    let mut h = hp(0.9);
    h.sparse_subspace = true;
    let mut state = TrackerState::new(dims, h, 900).unwrap();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(901);
    for i in 1..=150 {
        let pi = [0.2, 0.6, 1.0][i % 3];
        let sample = random_sample(&mut rng, dims.k, pi, i);
        let outcome = state.step(&sample).unwrap();
        let eigen = outcome.coefficients.x_cov.clone().symmetric_eigen();
        let min_eig = eigen.eigenvalues.min();
        assert!(min_eig > 0.0, "covariance lost definiteness at step {i}: {min_eig}");
        for &v in state.s().iter().chain(state.delta().iter()) {
            assert!((SCALE_MIN..=SCALE_MAX).contains(&v));
        }
        assert!(state.beta() > 0.0 && state.beta() <= SCALE_MAX);
        for v in state.gamma().iter().chain(state.rho().iter()).chain(state.w_var().iter()) {
            assert!((SCALE_MIN..=SCALE_MAX).contains(v));
        }
    }
}

#[test]
fn row_permutation_permutes_tracker_rows() {
    let dims = ModelDims::new(6, 3).unwrap();
    let h = hp(0.92);
    let base = TrackerState::new(dims, h, 1500).unwrap();
    let perm: Vec<usize> = vec![3, 0, 5, 1, 4, 2];

    let permute_rows = |m: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = m.clone();
        for (to, &from) in perm.iter().enumerate() {
            out.row_mut(to).copy_from(&m.row(from));
        }
        out
    };

    let mut permuted = TrackerState::from_parts(
        dims,
        h,
        permute_rows(&base.w_mean()),
        permute_rows(&base.w_var()),
        permute_rows(&base.gamma()),
        permute_rows(&base.rho()),
        base.s().clone(),
        base.delta().clone(),
        base.beta(),
        SufficientStats::zeros(dims, h.lambda),
        0,
    )
    .unwrap();
    let mut original = base;

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(1501);
    for i in 1..=30 {
        let sample = random_sample(&mut rng, dims.k, 0.6, i);
        let permuted_sample = StreamSample::new(
            DVector::from_iterator(dims.k, perm.iter().map(|&from| sample.z[from])),
            DVector::from_iterator(dims.k, perm.iter().map(|&from| sample.phi[from])),
            i,
        );
        original.step(&sample).unwrap();
        permuted.step(&permuted_sample).unwrap();
    }

    let expected = permute_rows(&original.w_mean());
    let got = permuted.w_mean();
    assert!((&got - &expected).norm() < 1e-9 * expected.norm().max(1.0));
    assert!((original.s() - permuted.s()).norm() < 1e-9);
    assert!((original.beta() - permuted.beta()).abs() < 1e-9 * original.beta());
}

#[test]
fn step_cost_scales_quadratically_in_rank() {
    // Doubling L multiplies the dominant |phi| L^2 term by four; with the
    // linear K L term along for the ride the measured ratio must sit in
    // [3, 5] at fixed K and |phi|.
    for pi in [0.5, 1.0] {
        let k = 100;
        let mut flops = Vec::new();
        for l in [10usize, 20] {
            let dims = ModelDims::new(k, l).unwrap();
            let mut state = TrackerState::new(dims, hp(0.95), 42).unwrap();
            let mut rng = Xoshiro256PlusPlus::seed_from_u64(43);
            let observed: Vec<bool> = (0..k).map(|j| (j as f64) < pi * k as f64).collect();
            let mut last = 0;
            for i in 1..=5 {
                let values: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let sample = StreamSample::from_observations(&values, &observed, i);
                state.step(&sample).unwrap();
                last = state.last_step_flops();
            }
            flops.push(last as f64);
        }
        let ratio = flops[1] / flops[0];
        assert!(
            (3.0..=5.0).contains(&ratio),
            "flop ratio for L doubling out of range at pi={pi}: {ratio}"
        );
    }
}
