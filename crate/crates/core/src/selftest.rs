//! Oracle checks behind the `selftest` command: finite-difference gradient,
//! Monte Carlo Fisher identity, and Kalman agreement of all three filters.

use std::fmt;

use nalgebra::{Matrix2, Vector1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::filters::{bootstrap_step, rlmcf_step, smcmc_prior_step, FilterConfig, FilterKind, ParticleCloud, ResamplingScheme};
use crate::linear::{KalmanState, ScalarLinearGaussian};
use crate::mcmc::EmpiricalPosterior;
use crate::motion::{state, StateVector, X, Y};
use crate::par;
use crate::proposal::RlProposalParams;
use crate::rng::substream;
use crate::sensor::{Measurement, SensorModel};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    /// Worst observed error statistic.
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {}: measured {:.3e} (threshold {:.3e}) {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold,
            self.detail
        )
    }
}

/// Uniformly random position inside the sensor's field of view, with a
/// margin in both axes.
pub fn random_state_in_view<R: Rng + ?Sized>(sensor: &SensorModel, rng: &mut R) -> StateVector {
    let ((r_lo, r_hi), (b_lo, b_hi)) = sensor.field_of_view();
    let r = rng.random_range(r_lo + 0.1 * (r_hi - r_lo)..r_hi - 0.1 * (r_hi - r_lo));
    let b = rng.random_range(b_lo + 0.1 * (b_hi - b_lo)..b_hi - 0.1 * (b_hi - b_lo));
    state(r * b.cos(), rng.random_range(-60.0..60.0), r * b.sin(), rng.random_range(-60.0..60.0))
}

/// Central finite differences of the log-likelihood in position with step
/// `h` metres; velocity entries are zero.
pub fn finite_difference_gradient(sensor: &SensorModel, z: &Measurement, x: &StateVector, h: f64) -> Result<StateVector> {
    let mut g = StateVector::zeros();
    for idx in [X, Y] {
        let mut plus = *x;
        let mut minus = *x;
        plus[idx] += h;
        minus[idx] -= h;
        g[idx] = (sensor.log_likelihood(z, &plus)? - sensor.log_likelihood(z, &minus)?) / (2.0 * h);
    }
    Ok(g)
}

/// Compares `gradient` with central differences on `n` random states, each
/// with a measurement simulated at a randomly displaced position.
pub fn gradient_check<G>(sensor: &SensorModel, n: usize, seed: u64, gradient: G) -> Result<CheckReport>
where
    G: Fn(&SensorModel, &Measurement, &StateVector) -> Result<StateVector>,
{
    const STEP: f64 = 1e-3;
    const THRESHOLD: f64 = 1e-5;
    let mut rng = substream(seed, &[0x4752_4144]);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let x = random_state_in_view(sensor, &mut rng);
        let mut source = x;
        source[X] += 100.0 * rng.sample::<f64, _>(StandardNormal);
        source[Y] += 100.0 * rng.sample::<f64, _>(StandardNormal);
        let z = sensor.simulate_measurement(&source, &mut rng)?;
        let analytic = gradient(sensor, &z, &x)?;
        let numeric = finite_difference_gradient(sensor, &z, &x, STEP)?;
        let rel = (analytic - numeric).norm() / numeric.norm().max(f64::MIN_POSITIVE);
        worst = worst.max(rel);
    }
    Ok(CheckReport {
        name: "gradient vs central differences".into(),
        passed: worst < THRESHOLD,
        measured: worst,
        threshold: THRESHOLD,
        detail: format!("max relative error over {n} states, step {STEP} m"),
    })
}

/// Empirical `E[g gᵀ]` of the score at `x` over `n` simulated measurements,
/// position block only.
pub fn empirical_score_covariance(sensor: &SensorModel, x: &StateVector, n: usize, seed: u64) -> Result<Matrix2<f64>> {
    let chunks = 16usize;
    let per_chunk = n.div_ceil(chunks);
    let partial = par::map_range(chunks, |c| -> Result<Matrix2<f64>> {
        let mut rng = substream(seed, &[0x4649_5348, c as u64]);
        let mut acc = Matrix2::zeros();
        let count = per_chunk.min(n.saturating_sub(c * per_chunk));
        for _ in 0..count {
            let z = sensor.simulate_measurement(x, &mut rng)?;
            let g = sensor.log_likelihood_gradient(&z, x)?;
            let gp = nalgebra::Vector2::new(g[X], g[Y]);
            acc += gp * gp.transpose();
        }
        Ok(acc)
    });
    let mut total = Matrix2::zeros();
    for p in partial {
        total += p?;
    }
    Ok(total / n as f64)
}

/// Relative Frobenius error between `likelihood_fisher` and the empirical
/// score covariance, worst over `states`.
pub fn fisher_check(sensor: &SensorModel, states: &[StateVector], n: usize, seed: u64) -> Result<CheckReport> {
    const THRESHOLD: f64 = 0.05;
    let mut worst: f64 = 0.0;
    for (i, x) in states.iter().enumerate() {
        let f = sensor.likelihood_fisher(x)?;
        let analytic = Matrix2::new(f[(X, X)], f[(X, Y)], f[(Y, X)], f[(Y, Y)]);
        let empirical = empirical_score_covariance(sensor, x, n, seed.wrapping_add(i as u64))?;
        worst = worst.max((analytic - empirical).norm() / analytic.norm());
    }
    Ok(CheckReport {
        name: "Fisher information vs E[g gT]".into(),
        passed: worst < THRESHOLD,
        measured: worst,
        threshold: THRESHOLD,
        detail: format!("max relative Frobenius error over {} states, {n} draws each", states.len()),
    })
}

/// Setup of the scalar linear-Gaussian agreement test.
#[derive(Debug, Clone)]
pub struct KalmanSetup {
    pub model: ScalarLinearGaussian,
    pub prior_mean: f64,
    pub prior_var: f64,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
}

impl Default for KalmanSetup {
    fn default() -> Self {
        Self {
            model: ScalarLinearGaussian { a: 0.95, q: 0.5, r: 1.0 },
            prior_mean: 0.0,
            prior_var: 2.0,
            steps: 10,
            runs: 20,
            seed: 17,
        }
    }
}

pub fn default_kalman_filters() -> Vec<FilterConfig> {
    vec![
        FilterConfig::rlmcf(300, 100, RlProposalParams::default()),
        FilterConfig::smcmc_prior(300, 100),
        FilterConfig::bootstrap(1000, ResamplingScheme::Systematic),
    ]
}

/// Runs `cfg` on the linear-Gaussian model and returns the final posterior
/// mean for each seeded run, plus the Kalman posterior mean.
pub fn kalman_runs(setup: &KalmanSetup, cfg: &FilterConfig) -> Result<(Vec<f64>, f64)> {
    let mut data_rng = substream(setup.seed, &[0x4441_5441]);
    let x0 = setup.prior_mean + setup.prior_var.sqrt() * data_rng.sample::<f64, _>(StandardNormal);
    let (_, ys) = setup.model.simulate(x0, setup.steps, &mut data_rng);
    let kalman = KalmanState { mean: setup.prior_mean, var: setup.prior_var }.filter(&setup.model, &ys);
    let finals = par::map_range(setup.runs, |run| -> Result<f64> {
        let mut rng = substream(setup.seed, &[0x5255_4e53, run as u64]);
        let initial: Vec<Vector1<f64>> = (0..cfg.n_particles)
            .map(|_| Vector1::new(setup.prior_mean + setup.prior_var.sqrt() * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let mut estimate = 0.0;
        match cfg.kind {
            FilterKind::Bootstrap => {
                let mut cloud = ParticleCloud::unweighted(initial);
                for y in &ys {
                    cloud = bootstrap_step(&cloud, y, &setup.model, &setup.model, cfg, &mut rng)?.0;
                    estimate = cloud.mean()?[0];
                }
            }
            FilterKind::Rlmcf | FilterKind::SmcmcPrior => {
                let mut post = EmpiricalPosterior::new(initial)?;
                for y in &ys {
                    post = if cfg.kind == FilterKind::Rlmcf {
                        rlmcf_step(&post, y, &setup.model, &setup.model, cfg, &mut rng)?.0
                    } else {
                        smcmc_prior_step(&post, y, &setup.model, &setup.model, cfg, &mut rng)?.0
                    };
                    estimate = crate::filters::point_estimate(post.particles(), None)?[0];
                }
            }
        }
        Ok(estimate)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((finals, kalman.last().map_or(setup.prior_mean, |k| k.mean)))
}

/// `|mean(est) - kalman| / (sd(est)/√n)`.
pub fn standard_error_score(estimates: &[f64], reference: f64) -> f64 {
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean - reference).abs() / (var / n).sqrt()
}

pub fn kalman_check(setup: &KalmanSetup, cfg: &FilterConfig) -> Result<CheckReport> {
    const THRESHOLD: f64 = 3.0;
    let (finals, kalman) = kalman_runs(setup, cfg)?;
    let score = standard_error_score(&finals, kalman);
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    Ok(CheckReport {
        name: format!("Kalman agreement ({})", cfg.kind.name()),
        passed: score <= THRESHOLD,
        measured: score,
        threshold: THRESHOLD,
        detail: format!("filter mean {mean:.5} vs Kalman {kalman:.5}, in standard errors over {} runs", setup.runs),
    })
}

/// The full oracle suite on the default surveillance sensor.
pub fn run_all() -> Result<Vec<CheckReport>> {
    let sensor = SensorModel::new(crate::sensor::SensorParams::default())?;
    let mut reports = vec![gradient_check(&sensor, 100, 1, |s, z, x| s.log_likelihood_gradient(z, x))?];
    let mut rng = substream(5, &[]);
    let states: Vec<StateVector> = (0..5).map(|_| random_state_in_view(&sensor, &mut rng)).collect();
    reports.push(fisher_check(&sensor, &states, 10_000, 99)?);
    let setup = KalmanSetup::default();
    for cfg in default_kalman_filters() {
        reports.push(kalman_check(&setup, &cfg)?);
    }
    Ok(reports)
}
