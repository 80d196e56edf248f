//! Sequential MCMC building blocks: the chain state over the pair
//! `(x_k, x_{k-1})`, the joint draw from the propagated empirical posterior,
//! and the two Metropolis-Hastings acceptance probabilities.

use nalgebra::SVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::motion::TransitionModel;
use crate::proposal::RlMoments;
use crate::sensor::MeasurementModel;

/// Equally weighted particle approximation of `p(x_{k-1} | y_{1:k-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPosterior<const D: usize> {
    particles: Vec<SVector<f64, D>>,
}

impl<const D: usize> EmpiricalPosterior<D> {
    pub fn new(particles: Vec<SVector<f64, D>>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::Interface("empirical posterior needs at least one particle".into()));
        }
        Ok(Self { particles })
    }

    pub fn particles(&self) -> &[SVector<f64, D>] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn into_particles(self) -> Vec<SVector<f64, D>> {
        self.particles
    }
}

/// Current sample of the chain with cached density terms.
#[derive(Debug, Clone)]
pub struct ChainState<const D: usize> {
    pub x_k: SVector<f64, D>,
    pub x_prev: SVector<f64, D>,
    /// `log p(y_k | x_k)`
    pub log_likelihood: f64,
    /// `log p(x_k | x_prev)`
    pub log_transition: f64,
    /// Proposal moments expanded at `x_k`, reused until the state moves.
    pub(crate) forward: Option<RlMoments<D>>,
}

impl<const D: usize> ChainState<D> {
    pub fn new<O, T>(
        x_k: SVector<f64, D>,
        x_prev: SVector<f64, D>,
        obs: &O,
        dynamics: &T,
        z: &O::Measurement,
    ) -> Result<Self>
    where
        O: MeasurementModel<D>,
        T: TransitionModel<D>,
    {
        let log_likelihood = obs.log_likelihood(z, &x_k)?;
        Ok(Self::from_parts(x_k, x_prev, log_likelihood, dynamics.log_density(&x_k, &x_prev)))
    }

    pub fn from_parts(x_k: SVector<f64, D>, x_prev: SVector<f64, D>, log_likelihood: f64, log_transition: f64) -> Self {
        Self { x_k, x_prev, log_likelihood, log_transition, forward: None }
    }

    /// Proposal moments cached for the next refinement, if any.
    pub fn cached_moments(&self) -> Option<&RlMoments<D>> {
        self.forward.as_ref()
    }

    /// Largest absolute discrepancy between the cached terms and a fresh
    /// evaluation.
    pub fn cache_error<O, T>(&self, obs: &O, dynamics: &T, z: &O::Measurement) -> Result<f64>
    where
        O: MeasurementModel<D>,
        T: TransitionModel<D>,
    {
        let ll = obs.log_likelihood(z, &self.x_k)?;
        let lt = dynamics.log_density(&self.x_k, &self.x_prev);
        Ok((ll - self.log_likelihood).abs().max((lt - self.log_transition).abs()))
    }
}

/// Draws `x_prev` uniformly from the empirical posterior and propagates it
/// through the dynamics. Returns `(x_k, x_prev)`.
pub fn joint_draw<const D: usize, T, R>(
    prior: &EmpiricalPosterior<D>,
    dynamics: &T,
    rng: &mut R,
) -> Result<(SVector<f64, D>, SVector<f64, D>)>
where
    T: TransitionModel<D>,
    R: Rng + ?Sized,
{
    let idx = joint_draw_index(prior, rng)?;
    let x_prev = prior.particles[idx];
    Ok((dynamics.sample(&x_prev, rng), x_prev))
}

pub(crate) fn joint_draw_index<const D: usize, R: Rng + ?Sized>(
    prior: &EmpiricalPosterior<D>,
    rng: &mut R,
) -> Result<usize> {
    if prior.is_empty() {
        return Err(Error::Interface("joint draw from an empty posterior".into()));
    }
    Ok(rng.random_range(0..prior.len()))
}

/// Acceptance probability of a joint draw. The proposal is the prior
/// dynamics times the empirical posterior, so everything but the likelihood
/// ratio cancels.
pub fn accept_joint(loglik_star: f64, loglik_cur: f64) -> Result<f64> {
    if loglik_star.is_nan() || loglik_cur.is_nan() {
        return Err(Error::Numerical("NaN log-likelihood in joint acceptance".into()));
    }
    let diff = loglik_star - loglik_cur;
    if diff.is_nan() {
        return Err(Error::Numerical(format!(
            "undefined likelihood ratio ({loglik_star} vs {loglik_cur})"
        )));
    }
    Ok(diff.min(0.0).exp())
}

/// Acceptance probability of a refinement move given the log numerator
/// `log p(y|x*) + log p(x*|x_prev) + log q(x_cur|x*)` and the matching
/// log denominator.
pub fn accept_refine(logw_star: f64, logw_cur: f64) -> Result<f64> {
    if logw_star.is_nan() || logw_cur.is_nan() {
        return Err(Error::Numerical("NaN log-weight in refinement acceptance".into()));
    }
    if logw_star == f64::NEG_INFINITY && logw_cur == f64::NEG_INFINITY {
        return Err(Error::Numerical("degenerate refinement proposal: both log-weights are -inf".into()));
    }
    if logw_star == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let diff = logw_star - logw_cur;
    if diff.is_nan() {
        return Err(Error::Numerical(format!("undefined refinement ratio ({logw_star} vs {logw_cur})")));
    }
    Ok(diff.min(0.0).exp())
}
