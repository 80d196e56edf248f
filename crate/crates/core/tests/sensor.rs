mod common;

use approx::assert_relative_eq;
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{default_sensor, small_sensor};
use rlmcf::motion::{state, StateVector, X, Y};
use rlmcf::selftest::{finite_difference_gradient, gradient_check, random_state_in_view};
use rlmcf::sensor::{polar_of, snr_to_amplitude, Measurement, SensorModel, SensorParams};
use rlmcf::Error;

fn at_polar(r: f64, b: f64) -> StateVector {
    state(r * b.cos(), 3.0, r * b.sin(), -2.0)
}

#[test]
fn snr_inversion() {
    assert_relative_eq!(snr_to_amplitude(1e-4, 80.0), 1.0, max_relative = 1e-14);
    assert_eq!(snr_to_amplitude(1.0, 0.0), 1.0);
    assert_relative_eq!(snr_to_amplitude(0.5, 20.0), 5.0, max_relative = 1e-15);
}

#[test]
fn polar_coordinates() {
    assert_eq!(polar_of(&state(1000.0, 0.0, 0.0, 0.0)).unwrap(), (1000.0, 0.0));
    let (r, b) = polar_of(&state(0.0, 0.0, 1000.0, 0.0)).unwrap();
    assert_eq!(r, 1000.0);
    assert_relative_eq!(b, std::f64::consts::FRAC_PI_2);
    let (r, b) = polar_of(&state(3.0, 0.0, 4.0, 0.0)).unwrap();
    assert_eq!(r, 5.0);
    assert_relative_eq!(b, 0.927_295_218_001_612_2, max_relative = 1e-15);
    assert!(matches!(polar_of(&state(0.0, 1.0, 0.0, 1.0)), Err(Error::Domain(_))));
}

#[test]
fn default_grid_shape() {
    let s = default_sensor();
    assert_eq!(s.grid_shape(), (8, 209));
    assert_eq!(s.n_cells(), 1672);
    let ((r_lo, r_hi), (b_lo, b_hi)) = s.field_of_view();
    assert_eq!((r_lo, r_hi), (22_000.0, 26_000.0));
    assert_relative_eq!(b_hi - b_lo, 209.0 * 0.005, max_relative = 1e-14);
    assert_relative_eq!(b_lo + b_hi, 0.0, epsilon = 1e-15);
    let (r0, b0) = s.cell(0);
    assert_eq!(r0, 22_250.0);
    assert_relative_eq!(b0, -0.5225 + 0.0025, epsilon = 1e-15);
}

#[test]
fn invalid_sensor_parameters() {
    let bad = SensorParams { sigma_w: 0.0, ..SensorParams::default() };
    assert!(matches!(SensorModel::new(bad), Err(Error::Parameter(_))));
    let bad = SensorParams { range_min: 30e3, ..SensorParams::default() };
    assert!(SensorModel::new(bad).is_err());
    let bad = SensorParams { bearing_resolution: 10.0, ..SensorParams::default() };
    assert!(SensorModel::new(bad).is_err());
}

#[test]
fn psf_values() {
    let s = default_sensor();
    let p = s.params().clone();
    let j = 3 * 209 + 100;
    let (rj, bj) = s.cell(j);
    assert_relative_eq!(s.psf(j, &at_polar(rj, bj)).unwrap(), 1.0, epsilon = 1e-12);

    let dr = (2.0 * p.range_psf * 2f64.ln()).sqrt();
    assert_relative_eq!(s.psf(j, &at_polar(rj + dr, bj)).unwrap(), 0.5, max_relative = 1e-9);

    let (dr, db) = (700.0, 0.01);
    let joint = s.psf(j, &at_polar(rj + dr, bj + db)).unwrap();
    let split = s.psf(j, &at_polar(rj + dr, bj)).unwrap() * s.psf(j, &at_polar(rj, bj + db)).unwrap();
    assert_relative_eq!(joint, split, max_relative = 1e-10);
    assert!(s.psf(s.n_cells(), &at_polar(rj, bj)).is_err());
}

#[test]
fn predicted_image_peaks_at_object_cell() {
    let s = default_sensor();
    let j = 4 * 209 + 50;
    let (rj, bj) = s.cell(j);
    let img = s.predicted_image(&at_polar(rj, bj)).unwrap();
    let v = img.values();
    assert_relative_eq!(v[j], 1.0, epsilon = 1e-12);
    let argmax = (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
    assert_eq!(argmax, j);
    // separable decay along the bearing axis of the object row
    assert_relative_eq!(v[j + 1] / v[j], v[j - 1] / v[j], max_relative = 1e-9);
    assert!(v[j + 1] < v[j] && v[j + 2] < v[j + 1]);
    assert!(v.iter().all(|x| (0.0..=1.0 + 1e-12).contains(x)));
}

#[test]
fn predicted_image_total_bounded_by_gaussian_integral() {
    let s = default_sensor();
    let p = s.params();
    let bound = p.amplitude * 2.0 * std::f64::consts::PI * (p.range_psf * p.bearing_psf).sqrt()
        / (p.range_resolution * p.bearing_resolution)
        + s.n_cells() as f64 * 1e-12;
    for (r, b) in [(24_000.0, 0.0), (40_000.0, 0.0), (24_000.0, 1.2), (22_100.0, -0.5)] {
        let total: f64 = s.predicted_image(&at_polar(r, b)).unwrap().values().iter().sum();
        assert!(total <= bound, "sum {total} exceeds {bound} at ({r}, {b})");
    }
    let remote: f64 = s.predicted_image(&at_polar(80_000.0, 2.5)).unwrap().values().iter().sum();
    assert!(remote < 1e-12);
}

#[test]
fn simulation_noise_free_limit() {
    let s = default_sensor().with_sigma_w(1e-300).unwrap();
    let x = at_polar(23_900.0, 0.01);
    let z = s.simulate_measurement(&x, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let y = s.predicted_image(&x).unwrap();
    for (a, b) in z.values().iter().zip(y.values()) {
        assert!((a - b).abs() <= 1e-290);
    }
}

#[test]
fn simulation_moments_per_cell() {
    let s = small_sensor(2, 3, 0.2);
    let x = at_polar(23_400.0, 0.002);
    let mean = s.predicted_image(&x).unwrap();
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut sum = vec![0.0; s.n_cells()];
    let mut sum_sq = vec![0.0; s.n_cells()];
    for _ in 0..n {
        let z = s.simulate_measurement(&x, &mut rng).unwrap();
        for (j, v) in z.values().iter().enumerate() {
            sum[j] += v;
            sum_sq[j] += v * v;
        }
    }
    for j in 0..s.n_cells() {
        let m = sum[j] / n as f64;
        let var = sum_sq[j] / n as f64 - m * m;
        assert!((m - mean.values()[j]).abs() < 4.0 * 0.2 / (n as f64).sqrt());
        assert!((var / 0.04 - 1.0).abs() < 0.10);
    }
}

#[test]
fn single_cell_log_likelihood_at_mean() {
    let s = small_sensor(1, 1, 1.0);
    let x = at_polar(23_100.0, 0.001);
    let z = s.predicted_image(&x).unwrap();
    assert_relative_eq!(s.log_likelihood(&z, &x).unwrap(), -0.918_938_533_204_672_7, epsilon = 1e-14);
}

#[test]
fn log_likelihood_rejects_wrong_length() {
    let s = small_sensor(2, 2, 1.0);
    let z = Measurement::new(vec![0.0; 5]).unwrap();
    assert!(matches!(s.log_likelihood(&z, &at_polar(23_500.0, 0.0)), Err(Error::Interface(_))));
    assert!(Measurement::new(vec![0.0, f64::NAN]).is_err());
}

/// Product of per-cell Gaussian densities in linear space, then one log.
fn product_of_densities(s: &SensorModel, z: &Measurement, x: &StateVector) -> f64 {
    let sigma = s.sigma_w();
    let mut prod = 1.0f64;
    for j in 0..s.n_cells() {
        let yhat = s.amplitude() * s.psf(j, x).unwrap();
        let d = z.values()[j] - yhat;
        prod *= (-(d * d) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    }
    prod.ln()
}

#[test]
fn log_likelihood_matches_brute_force_product() {
    let s = small_sensor(4, 4, 0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let x = at_polar(rng.random_range(23_000.0..25_000.0), rng.random_range(-0.01..0.01));
        let src = at_polar(rng.random_range(23_000.0..25_000.0), rng.random_range(-0.01..0.01));
        let z = s.simulate_measurement(&src, &mut rng).unwrap();
        let oracle = product_of_densities(&s, &z, &x);
        assert!((s.log_likelihood(&z, &x).unwrap() - oracle).abs() < 1e-9);
    }
}

#[test]
fn log_likelihood_difference_is_sum_of_changed_cells() {
    let s = small_sensor(3, 5, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = at_polar(23_700.0, 0.003);
    let b = at_polar(24_100.0, -0.004);
    let z = s.simulate_measurement(&a, &mut rng).unwrap();
    let (ya, yb) = (s.predicted_image(&a).unwrap(), s.predicted_image(&b).unwrap());
    let cell_ll = |z: f64, y: f64| -(z - y).powi(2) / (2.0 * 0.09);
    let expected: f64 = (0..s.n_cells())
        .filter(|&j| ya.values()[j] != yb.values()[j])
        .map(|j| cell_ll(z.values()[j], ya.values()[j]) - cell_ll(z.values()[j], yb.values()[j]))
        .sum();
    let diff = s.log_likelihood(&z, &a).unwrap() - s.log_likelihood(&z, &b).unwrap();
    assert_relative_eq!(diff, expected, max_relative = 1e-10);
}

#[test]
fn gradient_vanishes_on_noiseless_frame() {
    let s = default_sensor();
    let x = at_polar(24_321.0, 0.0321);
    let z = s.predicted_image(&x).unwrap();
    let g = s.log_likelihood_gradient(&z, &x).unwrap();
    let scale = s.likelihood_fisher(&x).unwrap().norm().sqrt();
    assert!(g.norm() < 1e-9 * scale, "{g}");
    assert_eq!((g[1], g[3]), (0.0, 0.0));
}

#[test]
fn gradient_matches_finite_differences() {
    let s = default_sensor();
    let report = gradient_check(&s, 100, 77, |s, z, x| s.log_likelihood_gradient(z, x)).unwrap();
    assert!(report.passed, "{report}");
}

#[test]
fn sabotaged_gradient_is_caught() {
    let s = small_sensor(4, 8, 0.01);
    let report = gradient_check(&s, 10, 3, |s, z, x| {
        let mut g = s.log_likelihood_gradient(z, x)?;
        g[X] *= 1.001;
        Ok(g)
    })
    .unwrap();
    assert!(!report.passed);
    assert!(report.measured > 1e-5);
}

#[test]
fn single_cell_centroid_is_stationary() {
    let s = small_sensor(1, 1, 0.5);
    let (r, b) = s.cell(0);
    let x = at_polar(r, b);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..5 {
        let z = Measurement::new(vec![rng.random_range(-3.0..3.0)]).unwrap();
        assert!(s.log_likelihood_gradient(&z, &x).unwrap().norm() < 1e-12);
    }
}

#[test]
fn gradient_at_origin_is_a_domain_error() {
    let s = small_sensor(1, 1, 0.5);
    let z = Measurement::new(vec![0.0]).unwrap();
    assert!(matches!(s.log_likelihood_gradient(&z, &state(0.0, 1.0, 0.0, 2.0)), Err(Error::Domain(_))));
    assert!(matches!(s.likelihood_fisher(&state(0.0, 1.0, 0.0, 2.0)), Err(Error::Domain(_))));
}

#[test]
fn fisher_structure() {
    let s = default_sensor();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let x = random_state_in_view(&s, &mut rng);
        let f = s.likelihood_fisher(&x).unwrap();
        for i in 0..4 {
            assert_eq!(f[(1, i)], 0.0);
            assert_eq!(f[(3, i)], 0.0);
            assert_eq!(f[(i, 1)], 0.0);
            assert_eq!(f[(i, 3)], 0.0);
        }
        assert!((f - f.transpose()).norm() <= 1e-12 * f.norm());
        let eig = SymmetricEigen::new(f).eigenvalues;
        assert!(eig.iter().all(|&e| e >= -1e-10 * f.trace()));
        let rank = eig.iter().filter(|e| e.abs() > 1e-9 * f.trace()).count();
        assert!(rank <= 2);
    }
}

#[test]
fn fisher_scales_with_inverse_noise_variance() {
    let s = default_sensor();
    let x = at_polar(23_800.0, -0.02);
    let f = s.likelihood_fisher(&x).unwrap();
    let f2 = s.with_sigma_w(2e-4).unwrap().likelihood_fisher(&x).unwrap();
    assert_eq!(f2 * 4.0, f);
    let f3 = s.with_sigma_w(3e-4).unwrap().likelihood_fisher(&x).unwrap();
    assert!((f3 * 9.0 - f).norm() <= 1e-14 * f.norm());
}

#[test]
fn fisher_matches_score_covariance_on_two_states() {
    let s = default_sensor();
    let states = [at_polar(24_000.0, 0.0), at_polar(22_700.0, 0.3)];
    let report = rlmcf::selftest::fisher_check(&s, &states, 10_000, 1).unwrap();
    assert!(report.passed, "{report}");
}

#[test]
fn noiseless_likelihood_peaks_at_truth() {
    let s = default_sensor();
    let truth = at_polar(23_456.0, 0.0789);
    let z = s.predicted_image(&truth).unwrap();
    let best = s.log_likelihood(&z, &truth).unwrap();
    for dx in -5..=5 {
        for dy in -5..=5 {
            if (dx, dy) == (0, 0) {
                continue;
            }
            let mut x = truth;
            x[X] += dx as f64 * 0.5;
            x[Y] += dy as f64 * 0.5;
            assert!(s.log_likelihood(&z, &x).unwrap() < best);
        }
    }
}

#[test]
fn gate_agrees_with_full_evaluation() {
    let full = default_sensor();
    let gated = default_sensor().with_gate(Some(rlmcf::sensor::DEFAULT_GATE));
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..200 {
        let truth = random_state_in_view(&full, &mut rng);
        let z = full.simulate_measurement(&truth, &mut rng).unwrap();
        let mut a = truth;
        a[X] += rng.random_range(-0.3..0.3);
        a[Y] += rng.random_range(-0.3..0.3);
        let b = random_state_in_view(&full, &mut rng);
        for other in [a, b] {
            let d_full = full.log_likelihood(&z, &truth).unwrap() - full.log_likelihood(&z, &other).unwrap();
            let d_gate = gated.log_likelihood(&z, &truth).unwrap() - gated.log_likelihood(&z, &other).unwrap();
            let p_full = d_full.min(0.0).exp();
            let p_gate = d_gate.min(0.0).exp();
            assert!((p_full - p_gate).abs() <= 1e-9);
            assert!((d_full - d_gate).abs() <= 1e-9 * d_full.abs().max(1.0), "{d_full} vs {d_gate}");
        }
        let g_full = full.log_likelihood_gradient(&z, &a).unwrap();
        let g_gate = gated.log_likelihood_gradient(&z, &a).unwrap();
        assert!((g_full - g_gate).norm() <= 1e-9 * g_full.norm().max(1.0));
    }
}

#[test]
fn finite_difference_helper_sanity() {
    let s = small_sensor(2, 2, 1.0);
    let x = at_polar(23_600.0, 0.001);
    let z = s.predicted_image(&at_polar(23_900.0, 0.002)).unwrap();
    let fd = finite_difference_gradient(&s, &z, &x, 1e-3).unwrap();
    assert_eq!((fd[1], fd[3]), (0.0, 0.0));
}

#[test]
fn frame_csv_has_one_row_per_cell() {
    let s = small_sensor(2, 3, 1.0);
    let z = s.predicted_image(&at_polar(23_500.0, 0.0)).unwrap();
    let mut buf = Vec::new();
    s.write_frame_csv(&z, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "r,b,z");
    assert_eq!(lines.len(), 1 + 6);
    assert_eq!(lines[1].split(',').count(), 3);
}
