#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rlmcf::config::ExperimentConfig;
use rlmcf::mcmc::accept_refine;
use rlmcf::motion::{NcvModel, StateVector, TransitionModel};
use rlmcf::proposal::{rl_logpdf, rl_moments_with_loglik, rl_sample, RlProposalParams};
use rlmcf::selftest::random_state_in_view;
use rlmcf::sensor::{SensorModel, SensorParams};

/// Grid of `n_range × n_bearing` cells with the default PSF constants.
pub fn small_sensor(n_range: usize, n_bearing: usize, sigma_w: f64) -> SensorModel {
    let d = SensorParams::default();
    let half_b = 0.5 * n_bearing as f64 * d.bearing_resolution;
    SensorModel::new(SensorParams {
        range_min: 23_000.0,
        range_max: 23_000.0 + n_range as f64 * d.range_resolution,
        bearing_min: -half_b,
        bearing_max: half_b,
        sigma_w,
        amplitude: 1.0,
        ..d
    })
    .unwrap()
}

pub fn default_sensor() -> SensorModel {
    SensorModel::new(SensorParams::default()).unwrap()
}

/// Dense multivariate normal log-density via LU inverse and determinant.
pub fn dense_mvn_logpdf(x: &[f64], mean: &[f64], cov: &[f64]) -> f64 {
    let n = x.len();
    let c = DMatrix::from_row_slice(n, n, cov);
    let inv = c.clone().try_inverse().unwrap();
    let d = DVector::from_column_slice(x) - DVector::from_column_slice(mean);
    let quad = (d.transpose() * inv * &d)[(0, 0)];
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + c.determinant().ln() + quad)
}

/// Largest `|log flow(a→b) − log flow(b→a)|` over `n` pairs, where
/// `flow(a→b) = π(a) q(b|a) α(a→b)` for the refinement target
/// `π(x) = p(y|x) p(x|x_prev)` and `b ~ q(·|a)`. Also returns how many
/// pairs had an acceptance probability below one in some direction.
pub fn detailed_balance_max_error(sensor: &SensorModel, n: usize, seed: u64) -> (f64, usize) {
    let motion = NcvModel::new(1.0, 1.0, 1.0).unwrap();
    let params = RlProposalParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut nontrivial = 0;
    for _ in 0..n {
        let x_prev = random_state_in_view(sensor, &mut rng);
        let a = motion.sample(&x_prev, &mut rng);
        let z = sensor.simulate_measurement(&a, &mut rng).unwrap();
        let (qa, ll_a) = rl_moments_with_loglik(sensor, &motion, &a, &x_prev, &z, &params).unwrap();
        let b = rl_sample(&qa, &mut rng);
        let (qb, ll_b) = rl_moments_with_loglik(sensor, &motion, &b, &x_prev, &z, &params).unwrap();
        let log_pi_a = ll_a + motion.log_density(&a, &x_prev);
        let log_pi_b = ll_b + motion.log_density(&b, &x_prev);
        let (q_ab, q_ba) = (rl_logpdf(&qa, &b), rl_logpdf(&qb, &a));
        let alpha_ab = accept_refine(log_pi_b + q_ba, log_pi_a + q_ab).unwrap();
        let alpha_ba = accept_refine(log_pi_a + q_ab, log_pi_b + q_ba).unwrap();
        assert!(alpha_ab > 0.0 && alpha_ba > 0.0);
        nontrivial += usize::from(alpha_ab.min(alpha_ba) < 1.0);
        let flow_ab = log_pi_a + q_ab + alpha_ab.ln();
        let flow_ba = log_pi_b + q_ba + alpha_ba.ln();
        worst = worst.max((flow_ab - flow_ba).abs());
    }
    (worst, nontrivial)
}

/// Default experiment shrunk to a few steps, particles and runs.
pub fn small_config(n_runs: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.n_steps = 4;
    cfg.scenario.n_runs = n_runs;
    let sizes = [(60, 20), (80, 20), (200, 0)];
    for (f, (n, burn)) in cfg.filters.iter_mut().zip(sizes) {
        f.n_particles = n;
        f.n_burn_in = burn;
    }
    cfg
}

/// `−E[∇² log p(y|x)]` by central differences of the analytic gradient,
/// averaged over `n` measurements simulated at `x`.
pub fn monte_carlo_negative_hessian(sensor: &SensorModel, x: &StateVector, n: usize, seed: u64) -> Matrix4<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-3;
    let mut acc = Matrix4::zeros();
    for _ in 0..n {
        let z = sensor.simulate_measurement(x, &mut rng).unwrap();
        for j in 0..4 {
            let mut up = *x;
            let mut dn = *x;
            up[j] += h;
            dn[j] -= h;
            let col = (sensor.log_likelihood_gradient(&z, &up).unwrap()
                - sensor.log_likelihood_gradient(&z, &dn).unwrap())
                / (2.0 * h);
            acc.set_column(j, &(acc.column(j) - col));
        }
    }
    acc / n as f64
}

/// `−∇² log p(x | x_prev)` by second differences of the scalar density.
pub fn transition_negative_hessian(motion: &NcvModel, x: &StateVector, x_prev: &StateVector) -> Matrix4<f64> {
    let h = 1e-2;
    let f = |dx: StateVector| motion.log_density(&(x + dx), x_prev);
    Matrix4::from_fn(|i, j| {
        let (ei, ej) = (StateVector::ith(i, h), StateVector::ith(j, h));
        -(f(ei + ej) - f(ei - ej) - f(ej - ei) + f(-ei - ej)) / (4.0 * h * h)
    })
}
