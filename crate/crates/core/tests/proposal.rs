mod common;

use nalgebra::{Matrix4, SymmetricEigen, Vector1, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{default_sensor, dense_mvn_logpdf, monte_carlo_negative_hessian, small_sensor};
use rlmcf::linear::ScalarLinearGaussian;
use rlmcf::motion::{state, NcvModel, StateVector, TransitionModel};
use rlmcf::proposal::{
    metric_tensor, moments_from_parts, rl_logpdf, rl_moments, rl_sample, MetricMode, RlProposalParams,
};
use rlmcf::selftest::random_state_in_view;

fn ncv() -> NcvModel {
    NcvModel::new(1.0, 1.0, 1.0).unwrap()
}

fn at_polar(r: f64, b: f64) -> StateVector {
    state(r * b.cos(), -30.0, r * b.sin(), 30.0)
}

#[test]
fn metric_far_from_view_is_dynamics_information() {
    let s = default_sensor();
    let m = ncv();
    let g = metric_tensor(&s, &m, &at_polar(5e6, 2.0)).unwrap();
    assert!((g - m.q_inv).abs().max() <= 1e-9);
}

#[test]
fn metric_is_fisher_plus_information() {
    let s = default_sensor();
    let m = ncv();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let x = random_state_in_view(&s, &mut rng);
        let g = metric_tensor(&s, &m, &x).unwrap();
        let fisher = s.likelihood_fisher(&x).unwrap();
        assert!((g - m.q_inv - fisher).norm() <= 1e-12 * fisher.norm().max(1.0));
        assert!(SymmetricEigen::new(g).eigenvalues.iter().all(|&e| e > 0.0));
    }
}

#[test]
fn metric_matches_expected_negative_hessian() {
    let s = small_sensor(4, 8, 0.05);
    let m = ncv();
    for (i, x) in [at_polar(23_800.0, 0.001), at_polar(24_300.0, -0.006)].iter().enumerate() {
        let oracle = monte_carlo_negative_hessian(&s, x, 2_000, i as u64) + m.q_inv;
        let g = metric_tensor(&s, &m, x).unwrap();
        let rel = (g - oracle).norm() / oracle.norm();
        assert!(rel < 0.05, "state {i}: relative error {rel}");
        let fisher = s.likelihood_fisher(x).unwrap();
        let rel_lik = (fisher - (oracle - m.q_inv)).norm() / fisher.norm();
        assert!(rel_lik < 0.05, "state {i}: likelihood part {rel_lik}");
    }
}

#[test]
fn identity_metric_is_scalar_mala() {
    let model = ScalarLinearGaussian::new(0.9, 0.4, 0.7).unwrap();
    let params = RlProposalParams { epsilon: 0.6, metric: MetricMode::Identity };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let (x, xp, z) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let m = rl_moments(&model, &model, &Vector1::new(x), &Vector1::new(xp), &z, &params).unwrap();
        // ∇ log π(x) for π(x) ∝ N(z; x, r) N(x; a xp, q)
        let grad = (z - x) / 0.7 - (x - 0.9 * xp) / 0.4;
        let eps2: f64 = 0.36;
        let mean = x + 0.5 * eps2 * grad;
        assert!((m.mean[0] - mean).abs() <= 1e-12);
        assert!((m.covariance[(0, 0)] - eps2).abs() <= 1e-12);
        let y: f64 = rng.random_range(-3.0..3.0);
        let textbook = -0.5 * (2.0 * std::f64::consts::PI * eps2).ln() - (y - mean).powi(2) / (2.0 * eps2);
        assert!((rl_logpdf(&m, &Vector1::new(y)) - textbook).abs() <= 1e-12);
    }
}

#[test]
fn riemann_metric_on_linear_model_is_exact_curvature() {
    let model = ScalarLinearGaussian::new(1.0, 0.5, 2.0).unwrap();
    let params = RlProposalParams { epsilon: 1.0, metric: MetricMode::Riemann };
    let m = rl_moments(&model, &model, &Vector1::new(0.3), &Vector1::new(-0.2), &1.1, &params).unwrap();
    let g = 1.0 / 2.0 + 1.0 / 0.5;
    let grad = (1.1 - 0.3) / 2.0 - (0.3 + 0.2) / 0.5;
    assert!((m.mean[0] - (0.3 + 0.5 * grad / g)).abs() < 1e-14);
    assert!((m.covariance[(0, 0)] - 1.0 / g).abs() < 1e-14);
    // with ε = 1 one drift covers half the distance to the Gaussian mode
    let mode = (1.1 / 2.0 + (-0.2) / 0.5) / g;
    assert!((m.mean[0] - (0.3 + 0.5 * (mode - 0.3))).abs() < 1e-14);
}

#[test]
fn zero_gradient_leaves_mean_at_current_state() {
    let s = default_sensor();
    let m = ncv();
    let x_prev = at_polar(24_000.0, 0.01);
    let x_k = m.predict(&x_prev);
    let z = s.predicted_image(&x_k).unwrap();
    let mo = rl_moments(&s, &m, &x_k, &x_prev, &z, &RlProposalParams::default()).unwrap();
    assert!((mo.mean - x_k).norm() < 1e-9);
}

#[test]
fn moments_are_consistent() {
    let s = default_sensor();
    let m = ncv();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let x_prev = random_state_in_view(&s, &mut rng);
        let x_k = m.sample(&x_prev, &mut rng);
        let z = s.simulate_measurement(&x_k, &mut rng).unwrap();
        let mo = rl_moments(&s, &m, &x_k, &x_prev, &z, &RlProposalParams::default()).unwrap();
        assert!((mo.precision * mo.covariance - Matrix4::identity()).abs().max() < 1e-9);
        assert_eq!(mo.covariance, mo.covariance.transpose());
        assert!(SymmetricEigen::new(mo.covariance).eigenvalues.iter().all(|&e| e > 0.0));
        assert!((mo.log_det - mo.covariance.determinant().ln()).abs() < 1e-6);
    }
}

#[test]
fn sample_moments_match() {
    let metric = Matrix4::new(
        4.0, 1.0, 0.5, 0.0, //
        1.0, 3.0, 0.0, 0.2, //
        0.5, 0.0, 2.0, 0.3, //
        0.0, 0.2, 0.3, 1.0,
    );
    let mo = moments_from_parts(&Vector4::new(1.0, -2.0, 3.0, 0.5), metric, &Vector4::new(0.4, 0.1, -0.3, 0.2), 0.8)
        .unwrap();
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws: Vec<Vector4<f64>> = (0..n).map(|_| rl_sample(&mo, &mut rng)).collect();
    let avg = draws.iter().sum::<Vector4<f64>>() / n as f64;
    for i in 0..4 {
        assert!((avg[i] - mo.mean[i]).abs() < 4.0 * mo.covariance[(i, i)].sqrt() / (n as f64).sqrt());
    }
    let cov = draws.iter().map(|d| (d - avg) * (d - avg).transpose()).sum::<Matrix4<f64>>() / (n - 1) as f64;
    assert!((cov - mo.covariance).norm() / mo.covariance.norm() < 0.03);
}

#[test]
fn logpdf_matches_dense_oracle() {
    let s = default_sensor();
    let m = ncv();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let x_prev = random_state_in_view(&s, &mut rng);
        let x_k = m.sample(&x_prev, &mut rng);
        let z = s.simulate_measurement(&x_k, &mut rng).unwrap();
        let mo = rl_moments(&s, &m, &x_k, &x_prev, &z, &RlProposalParams { epsilon: 0.7, ..Default::default() })
            .unwrap();
        let y = rl_sample(&mo, &mut rng);
        let oracle = dense_mvn_logpdf(y.as_slice(), mo.mean.as_slice(), mo.covariance.as_slice());
        let v = rl_logpdf(&mo, &y);
        assert!((v - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "{v} vs {oracle}");
    }
}

#[test]
fn forward_and_reverse_densities_differ() {
    let s = default_sensor();
    let m = ncv();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = RlProposalParams::default();
    let x_prev = at_polar(24_000.0, 0.0);
    let x_k = m.sample(&x_prev, &mut rng);
    let z = s.simulate_measurement(&x_prev, &mut rng).unwrap();
    let fwd = rl_moments(&s, &m, &x_k, &x_prev, &z, &params).unwrap();
    let y = rl_sample(&fwd, &mut rng);
    let rev = rl_moments(&s, &m, &y, &x_prev, &z, &params).unwrap();
    assert_ne!(rl_logpdf(&fwd, &y), rl_logpdf(&rev, &x_k));
}

#[test]
fn symmetric_for_identity_metric_and_zero_gradient() {
    let mo_a = moments_from_parts(&Vector4::new(1.0, 2.0, 3.0, 4.0), Matrix4::identity(), &Vector4::zeros(), 0.5)
        .unwrap();
    let b = Vector4::new(1.2, 1.9, 3.3, 3.8);
    let mo_b = moments_from_parts(&b, Matrix4::identity(), &Vector4::zeros(), 0.5).unwrap();
    assert_eq!(rl_logpdf(&mo_a, &b), rl_logpdf(&mo_b, &Vector4::new(1.0, 2.0, 3.0, 4.0)));
}

#[test]
fn epsilon_validation() {
    assert!(RlProposalParams { epsilon: 0.0, ..Default::default() }.validate().is_err());
    assert!(RlProposalParams { epsilon: f64::NAN, ..Default::default() }.validate().is_err());
    assert!(RlProposalParams::default().validate().is_ok());
}
