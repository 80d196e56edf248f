//! The three compared filters: the Riemann-Langevin MC filter, sequential
//! MCMC with the prior as proposal, and the bootstrap particle filter.

use std::collections::HashSet;

use nalgebra::SVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{accept_joint, accept_refine, joint_draw, ChainState, EmpiricalPosterior};
use crate::motion::TransitionModel;
use crate::par;
use crate::proposal::{rl_logpdf, rl_moments_with_loglik, rl_sample, RlProposalParams};
use crate::sensor::MeasurementModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Rlmcf,
    SmcmcPrior,
    Bootstrap,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Rlmcf => "rlmcf",
            FilterKind::SmcmcPrior => "smcmc_prior",
            FilterKind::Bootstrap => "bootstrap",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "rlmcf" => Some(FilterKind::Rlmcf),
            "smcmc_prior" => Some(FilterKind::SmcmcPrior),
            "bootstrap" => Some(FilterKind::Bootstrap),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingScheme {
    #[default]
    Systematic,
    Multinomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub kind: FilterKind,
    pub n_particles: usize,
    pub n_burn_in: usize,
    pub proposal: RlProposalParams,
    pub resampling: ResamplingScheme,
    /// Run the Langevin refinement phase (Riemann-Langevin filter only).
    pub refinement: bool,
}

impl FilterConfig {
    pub fn rlmcf(n_particles: usize, n_burn_in: usize, proposal: RlProposalParams) -> Self {
        Self {
            kind: FilterKind::Rlmcf,
            n_particles,
            n_burn_in,
            proposal,
            resampling: ResamplingScheme::default(),
            refinement: true,
        }
    }

    pub fn smcmc_prior(n_particles: usize, n_burn_in: usize) -> Self {
        Self {
            kind: FilterKind::SmcmcPrior,
            n_particles,
            n_burn_in,
            proposal: RlProposalParams::default(),
            resampling: ResamplingScheme::default(),
            refinement: false,
        }
    }

    pub fn bootstrap(n_particles: usize, resampling: ResamplingScheme) -> Self {
        Self {
            kind: FilterKind::Bootstrap,
            n_particles,
            n_burn_in: 0,
            proposal: RlProposalParams::default(),
            resampling,
            refinement: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_particles == 0 {
            return Err(Error::Parameter("n_particles must be positive".into()));
        }
        self.proposal.validate()
    }
}

/// Particle set, optionally carrying normalized importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud<const D: usize> {
    pub particles: Vec<SVector<f64, D>>,
    pub weights: Option<Vec<f64>>,
}

impl<const D: usize> ParticleCloud<D> {
    pub fn unweighted(particles: Vec<SVector<f64, D>>) -> Self {
        Self { particles, weights: None }
    }

    pub fn weighted(particles: Vec<SVector<f64, D>>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != particles.len() {
            return Err(Error::Interface("weight and particle counts differ".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Interface("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Interface(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { particles, weights: Some(weights) })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn mean(&self) -> Result<SVector<f64, D>> {
        point_estimate(&self.particles, self.weights.as_deref())
    }
}

impl<const D: usize> From<EmpiricalPosterior<D>> for ParticleCloud<D> {
    fn from(p: EmpiricalPosterior<D>) -> Self {
        Self::unweighted(p.into_particles())
    }
}

/// Sample mean of the particles, weight-aware when weights are given.
pub fn point_estimate<const D: usize>(particles: &[SVector<f64, D>], weights: Option<&[f64]>) -> Result<SVector<f64, D>> {
    if particles.is_empty() {
        return Err(Error::Interface("point estimate of an empty cloud".into()));
    }
    match weights {
        None => Ok(particles.iter().sum::<SVector<f64, D>>() / particles.len() as f64),
        Some(w) => {
            if w.len() != particles.len() {
                return Err(Error::Interface("weight and particle counts differ".into()));
            }
            Ok(particles.iter().zip(w).map(|(p, w)| p * *w).sum())
        }
    }
}

/// Number of particles that differ in at least one component.
pub fn distinct_count<const D: usize>(particles: &[SVector<f64, D>]) -> usize {
    particles
        .iter()
        .map(|p| p.iter().map(|v| (v + 0.0).to_bits()).collect::<Vec<u64>>())
        .collect::<HashSet<_>>()
        .len()
}

/// Normalizes log-weights with the log-sum-exp shift.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    if log_weights.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(Error::Numerical("log-weights must not be NaN or +inf".into()));
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateLikelihood);
    }
    let w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Systematic resampling: one uniform offset, `n` evenly spaced pointers.
pub fn systematic_resample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let step = 1.0 / n as f64;
    let start = rng.random::<f64>() * step;
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights[0];
    let mut j = 0;
    for i in 0..n {
        let u = start + i as f64 * step;
        while u >= cumulative && j + 1 < weights.len() {
            j += 1;
            cumulative += weights[j];
        }
        out.push(j);
    }
    out
}

/// Multinomial resampling by inverse-CDF lookup.
pub fn multinomial_resample<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cdf.push(acc);
    }
    (0..n)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cdf.partition_point(|c| *c <= u).min(weights.len() - 1)
        })
        .collect()
}

/// Per-step chain statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChainDiagnostics {
    pub iterations: usize,
    pub joint_accepts: usize,
    pub refine_attempts: usize,
    pub refine_accepts: usize,
    /// Metric factorizations that needed diagonal jitter.
    pub jitter_count: usize,
    /// Chain iteration (1-based, as in `(x_k, x_{k-1})^{i+1}`) of every
    /// returned particle.
    pub output_iterations: Vec<usize>,
    /// Iterations inside the output window where the state moved.
    pub moves_in_output: usize,
}

impl ChainDiagnostics {
    pub fn joint_acceptance_rate(&self) -> f64 {
        ratio(self.joint_accepts, self.iterations)
    }

    pub fn refine_acceptance_rate(&self) -> f64 {
        ratio(self.refine_accepts, self.refine_attempts)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        f64::NAN
    } else {
        num as f64 / den as f64
    }
}

/// Generic sequential MCMC step; `refinement = None` gives the prior-proposal
/// sampler.
#[allow(clippy::too_many_arguments)]
pub fn sequential_mcmc_step<const D: usize, O, T, R>(
    prior: &EmpiricalPosterior<D>,
    z: &O::Measurement,
    obs: &O,
    dynamics: &T,
    n_burn_in: usize,
    n_particles: usize,
    refinement: Option<&RlProposalParams>,
    rng: &mut R,
) -> Result<(EmpiricalPosterior<D>, ChainDiagnostics)>
where
    O: MeasurementModel<D>,
    T: TransitionModel<D>,
    R: Rng + ?Sized,
{
    sequential_mcmc_step_observed(prior, z, obs, dynamics, n_burn_in, n_particles, refinement, rng, |_| {})
}

/// As [`sequential_mcmc_step`], calling `observe` with the chain state at the
/// end of every iteration.
#[allow(clippy::too_many_arguments)]
pub fn sequential_mcmc_step_observed<const D: usize, O, T, R, F>(
    prior: &EmpiricalPosterior<D>,
    z: &O::Measurement,
    obs: &O,
    dynamics: &T,
    n_burn_in: usize,
    n_particles: usize,
    refinement: Option<&RlProposalParams>,
    rng: &mut R,
    mut observe: F,
) -> Result<(EmpiricalPosterior<D>, ChainDiagnostics)>
where
    O: MeasurementModel<D>,
    T: TransitionModel<D>,
    R: Rng + ?Sized,
    F: FnMut(&ChainState<D>),
{
    if n_particles == 0 {
        return Err(Error::Parameter("n_particles must be positive".into()));
    }
    let (x_k, x_prev) = joint_draw(prior, dynamics, rng)?;
    let mut chain = ChainState::new(x_k, x_prev, obs, dynamics, z)?;
    let mut diag = ChainDiagnostics::default();
    let mut out = Vec::with_capacity(n_particles);

    for i in 0..n_burn_in + n_particles {
        let mut moved = false;

        // joint draw
        let (xk_star, xp_star) = joint_draw(prior, dynamics, rng)?;
        let ll_star = obs.log_likelihood(z, &xk_star)?;
        let rho = accept_joint(ll_star, chain.log_likelihood)?;
        if rng.random::<f64>() < rho {
            let lt = dynamics.log_density(&xk_star, &xp_star);
            chain = ChainState::from_parts(xk_star, xp_star, ll_star, lt);
            diag.joint_accepts += 1;
            moved = true;
        }

        // refinement of x_k with x_prev held fixed
        if let Some(params) = refinement {
            let forward = match chain.forward.take() {
                Some(m) => m,
                None => {
                    let (m, _) = rl_moments_with_loglik(obs, dynamics, &chain.x_k, &chain.x_prev, z, params)?;
                    diag.jitter_count += usize::from(m.jittered);
                    m
                }
            };
            let x_star = rl_sample(&forward, rng);
            let (reverse, ll_star) = rl_moments_with_loglik(obs, dynamics, &x_star, &chain.x_prev, z, params)?;
            diag.jitter_count += usize::from(reverse.jittered);
            let lt_star = dynamics.log_density(&x_star, &chain.x_prev);
            let logw_star = ll_star + lt_star + rl_logpdf(&reverse, &chain.x_k);
            let logw_cur = chain.log_likelihood + chain.log_transition + rl_logpdf(&forward, &x_star);
            let rho_r = accept_refine(logw_star, logw_cur)?;
            diag.refine_attempts += 1;
            if rng.random::<f64>() < rho_r {
                chain.x_k = x_star;
                chain.log_likelihood = ll_star;
                chain.log_transition = lt_star;
                chain.forward = Some(reverse);
                diag.refine_accepts += 1;
                moved = true;
            } else {
                chain.forward = Some(forward);
            }
        }

        diag.iterations += 1;
        observe(&chain);
        if i >= n_burn_in {
            out.push(chain.x_k);
            diag.output_iterations.push(i + 1);
            if moved && i > n_burn_in {
                diag.moves_in_output += 1;
            }
        }
    }
    Ok((EmpiricalPosterior::new(out)?, diag))
}

/// One step of the Riemann-Langevin MC filter.
pub fn rlmcf_step<const D: usize, O, T, R>(
    prior: &EmpiricalPosterior<D>,
    z: &O::Measurement,
    obs: &O,
    dynamics: &T,
    cfg: &FilterConfig,
    rng: &mut R,
) -> Result<(EmpiricalPosterior<D>, ChainDiagnostics)>
where
    O: MeasurementModel<D>,
    T: TransitionModel<D>,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let refinement = cfg.refinement.then_some(&cfg.proposal);
    sequential_mcmc_step(prior, z, obs, dynamics, cfg.n_burn_in, cfg.n_particles, refinement, rng)
}

/// One step of sequential MCMC with joint draws from the prior only.
pub fn smcmc_prior_step<const D: usize, O, T, R>(
    prior: &EmpiricalPosterior<D>,
    z: &O::Measurement,
    obs: &O,
    dynamics: &T,
    cfg: &FilterConfig,
    rng: &mut R,
) -> Result<(EmpiricalPosterior<D>, ChainDiagnostics)>
where
    O: MeasurementModel<D>,
    T: TransitionModel<D>,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    sequential_mcmc_step(prior, z, obs, dynamics, cfg.n_burn_in, cfg.n_particles, None, rng)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BootstrapDiagnostics {
    pub effective_sample_size: f64,
    pub max_weight: f64,
}

/// Bootstrap filter step: propagate, weight by likelihood, resample.
pub fn bootstrap_step<const D: usize, O, T, R>(
    prior: &ParticleCloud<D>,
    z: &O::Measurement,
    obs: &O,
    dynamics: &T,
    cfg: &FilterConfig,
    rng: &mut R,
) -> Result<(ParticleCloud<D>, BootstrapDiagnostics)>
where
    O: MeasurementModel<D>,
    T: TransitionModel<D>,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    if prior.is_empty() {
        return Err(Error::Interface("bootstrap step on an empty cloud".into()));
    }
    let predicted: Vec<SVector<f64, D>> = prior.particles.iter().map(|p| dynamics.sample(p, rng)).collect();
    let log_lik = par::map(&predicted, |x| obs.log_likelihood(z, x));
    let mut log_weights = Vec::with_capacity(predicted.len());
    for (i, ll) in log_lik.into_iter().enumerate() {
        let prior_w = prior.weights.as_ref().map_or(0.0, |w| w[i].ln());
        log_weights.push(ll? + prior_w);
    }
    let weights = normalize_log_weights(&log_weights)?;
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let max_weight = weights.iter().copied().fold(0.0, f64::max);
    let idx = match cfg.resampling {
        ResamplingScheme::Systematic => systematic_resample(&weights, cfg.n_particles, rng),
        ResamplingScheme::Multinomial => multinomial_resample(&weights, cfg.n_particles, rng),
    };
    let particles = idx.into_iter().map(|i| predicted[i]).collect();
    Ok((ParticleCloud::unweighted(particles), BootstrapDiagnostics { effective_sample_size: ess, max_weight }))
}
