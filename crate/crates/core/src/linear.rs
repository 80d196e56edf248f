//! Scalar linear-Gaussian state-space model and its Kalman filter.
//!
//! `x_k = a·x_{k-1} + v`, `v ~ N(0, q)`; `y_k = x_k + w`, `w ~ N(0, r)`.
//! All three particle filters can run on this model, and the Kalman
//! recursion gives the exact posterior to compare against.

use nalgebra::{Matrix1, Vector1};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::LN_2PI;
use crate::motion::TransitionModel;
use crate::sensor::MeasurementModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarLinearGaussian {
    pub a: f64,
    pub q: f64,
    pub r: f64,
}

impl ScalarLinearGaussian {
    pub fn new(a: f64, q: f64, r: f64) -> Result<Self> {
        if !(q > 0.0 && r > 0.0 && a.is_finite() && q.is_finite() && r.is_finite()) {
            return Err(Error::Parameter("q and r must be positive and finite".into()));
        }
        Ok(Self { a, q, r })
    }

    /// Simulates `steps` measurements starting from `x0`; returns states
    /// `x_1..x_K` and measurements `y_1..y_K`.
    pub fn simulate<R: Rng + ?Sized>(&self, x0: f64, steps: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let mut x = x0;
        let mut xs = Vec::with_capacity(steps);
        let mut ys = Vec::with_capacity(steps);
        for _ in 0..steps {
            x = self.a * x + self.q.sqrt() * rng.sample::<f64, _>(StandardNormal);
            xs.push(x);
            ys.push(x + self.r.sqrt() * rng.sample::<f64, _>(StandardNormal));
        }
        (xs, ys)
    }
}

impl TransitionModel<1> for ScalarLinearGaussian {
    fn sample<R: Rng + ?Sized>(&self, prev: &Vector1<f64>, rng: &mut R) -> Vector1<f64> {
        Vector1::new(self.a * prev[0] + self.q.sqrt() * rng.sample::<f64, _>(StandardNormal))
    }

    fn log_density(&self, next: &Vector1<f64>, prev: &Vector1<f64>) -> f64 {
        let d = next[0] - self.a * prev[0];
        -0.5 * (LN_2PI + self.q.ln() + d * d / self.q)
    }

    fn grad_log_density(&self, next: &Vector1<f64>, prev: &Vector1<f64>) -> Vector1<f64> {
        Vector1::new(-(next[0] - self.a * prev[0]) / self.q)
    }

    fn information(&self) -> Matrix1<f64> {
        Matrix1::new(1.0 / self.q)
    }

    fn predict(&self, prev: &Vector1<f64>) -> Vector1<f64> {
        Vector1::new(self.a * prev[0])
    }
}

impl MeasurementModel<1> for ScalarLinearGaussian {
    type Measurement = f64;

    fn log_likelihood(&self, z: &f64, x: &Vector1<f64>) -> Result<f64> {
        let d = z - x[0];
        Ok(-0.5 * (LN_2PI + self.r.ln() + d * d / self.r))
    }

    fn log_likelihood_gradient(&self, z: &f64, x: &Vector1<f64>) -> Result<Vector1<f64>> {
        Ok(Vector1::new((z - x[0]) / self.r))
    }

    fn fisher_information(&self, _x: &Vector1<f64>) -> Result<Matrix1<f64>> {
        Ok(Matrix1::new(1.0 / self.r))
    }
}

/// Gaussian posterior `N(mean, var)` propagated by the Kalman recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: f64,
    pub var: f64,
}

impl KalmanState {
    pub fn step(self, model: &ScalarLinearGaussian, y: f64) -> Self {
        let mean_pred = model.a * self.mean;
        let var_pred = model.a * model.a * self.var + model.q;
        let gain = var_pred / (var_pred + model.r);
        Self { mean: mean_pred + gain * (y - mean_pred), var: (1.0 - gain) * var_pred }
    }

    /// Posterior after each measurement in `ys`.
    pub fn filter(self, model: &ScalarLinearGaussian, ys: &[f64]) -> Vec<KalmanState> {
        ys.iter()
            .scan(self, |s, &y| {
                *s = s.step(model, y);
                Some(*s)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kalman_with_exact_measurement_noise_free_limit() {
        let m = ScalarLinearGaussian::new(1.0, 1.0, 1e-12).unwrap();
        let s = KalmanState { mean: 0.0, var: 1.0 }.step(&m, 3.0);
        assert!((s.mean - 3.0).abs() < 1e-9);
    }

    #[test]
    fn kalman_balances_equal_variances() {
        let m = ScalarLinearGaussian::new(1.0, 1.0, 2.0).unwrap();
        let s = KalmanState { mean: 0.0, var: 1.0 }.step(&m, 4.0);
        assert!((s.mean - 2.0).abs() < 1e-15);
        assert!((s.var - 1.0).abs() < 1e-15);
    }
}
