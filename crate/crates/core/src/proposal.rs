//! Riemann-Langevin proposal
//!
//! ```text
//! q(x' | x_k, x_prev, y) = N(x'; x_k + ε²/2 · G⁻¹ ∇ log[p(y|x_k) p(x_k|x_prev)], ε² G⁻¹)
//! ```
//!
//! with metric `G = I_F(x_k) + Q⁻¹`: the expected Fisher information of the
//! likelihood plus the (constant) information of the Gaussian transition.

use nalgebra::{Cholesky, Const, SMatrix, SVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian;
use crate::motion::TransitionModel;
use crate::sensor::MeasurementModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    /// Fisher information plus transition information.
    Riemann,
    /// Unit metric: plain MALA.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RlProposalParams {
    pub epsilon: f64,
    pub metric: MetricMode,
}

impl Default for RlProposalParams {
    fn default() -> Self {
        Self { epsilon: 1.0, metric: MetricMode::Riemann }
    }
}

impl RlProposalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Gaussian moments of one proposal expansion.
#[derive(Debug, Clone)]
pub struct RlMoments<const D: usize> {
    pub mean: SVector<f64, D>,
    pub covariance: SMatrix<f64, D, D>,
    pub precision: SMatrix<f64, D, D>,
    /// ln det of `covariance`.
    pub log_det: f64,
    /// Upper-triangular `S` with `S Sᵀ = covariance`.
    sample_factor: SMatrix<f64, D, D>,
    /// Whether the metric needed diagonal jitter to factorize.
    pub jittered: bool,
}

/// `G(x_k) = I_F(x_k) + Q⁻¹`.
pub fn metric_tensor<const D: usize, O, T>(obs: &O, dynamics: &T, x_k: &SVector<f64, D>) -> Result<SMatrix<f64, D, D>>
where
    O: MeasurementModel<D>,
    T: TransitionModel<D>,
{
    Ok(obs.fisher_information(x_k)? + dynamics.information())
}

fn factorize<const D: usize>(g: SMatrix<f64, D, D>) -> Result<(Cholesky<f64, Const<D>>, SMatrix<f64, D, D>, bool)> {
    if let Some(chol) = Cholesky::new(g) {
        return Ok((chol, g, false));
    }
    let jitter = 1e-10 * g.trace() / D as f64;
    let jittered = g + SMatrix::<f64, D, D>::identity() * jitter.abs().max(f64::MIN_POSITIVE);
    Cholesky::new(jittered)
        .map(|c| (c, jittered, true))
        .ok_or_else(|| Error::Numerical("metric tensor is not positive definite".into()))
}

/// Builds proposal moments from a metric and the total log-target gradient.
pub fn moments_from_parts<const D: usize>(
    x_k: &SVector<f64, D>,
    metric: SMatrix<f64, D, D>,
    gradient: &SVector<f64, D>,
    epsilon: f64,
) -> Result<RlMoments<D>> {
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numerical("non-finite log-target gradient".into()));
    }
    let (chol, g, jittered) = factorize(metric)?;
    let eps2 = epsilon * epsilon;
    let mean = x_k + chol.solve(gradient) * (0.5 * eps2);
    let covariance = gaussian::symmetrize(&(chol.inverse() * eps2));
    let precision = gaussian::symmetrize(&(g / eps2));
    let log_det_g = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let log_det = D as f64 * eps2.ln() - log_det_g;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&SMatrix::<f64, D, D>::identity())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let sample_factor = l_inv.transpose() * epsilon;
    Ok(RlMoments { mean, covariance, precision, log_det, sample_factor, jittered })
}

/// Proposal moments expanded at `x_k`, together with `log p(y | x_k)` which
/// is a by-product of the gradient evaluation.
pub fn rl_moments_with_loglik<const D: usize, O, T>(
    obs: &O,
    dynamics: &T,
    x_k: &SVector<f64, D>,
    x_prev: &SVector<f64, D>,
    z: &O::Measurement,
    params: &RlProposalParams,
) -> Result<(RlMoments<D>, f64)>
where
    O: MeasurementModel<D>,
    T: TransitionModel<D>,
{
    let (ll, grad_ll) = obs.log_likelihood_with_gradient(z, x_k)?;
    let gradient = grad_ll + dynamics.grad_log_density(x_k, x_prev);
    let metric = match params.metric {
        MetricMode::Riemann => metric_tensor(obs, dynamics, x_k)?,
        MetricMode::Identity => SMatrix::<f64, D, D>::identity(),
    };
    Ok((moments_from_parts(x_k, metric, &gradient, params.epsilon)?, ll))
}

pub fn rl_moments<const D: usize, O, T>(
    obs: &O,
    dynamics: &T,
    x_k: &SVector<f64, D>,
    x_prev: &SVector<f64, D>,
    z: &O::Measurement,
    params: &RlProposalParams,
) -> Result<RlMoments<D>>
where
    O: MeasurementModel<D>,
    T: TransitionModel<D>,
{
    Ok(rl_moments_with_loglik(obs, dynamics, x_k, x_prev, z, params)?.0)
}

pub fn rl_sample<const D: usize, R: Rng + ?Sized>(moments: &RlMoments<D>, rng: &mut R) -> SVector<f64, D> {
    moments.mean + moments.sample_factor * gaussian::standard_normal::<D, R>(rng)
}

pub fn rl_logpdf<const D: usize>(moments: &RlMoments<D>, x: &SVector<f64, D>) -> f64 {
    gaussian::log_density(x, &moments.mean, &moments.precision, moments.log_det)
}
