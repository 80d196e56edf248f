//! Nearly-constant-velocity motion model.

use nalgebra::{Cholesky, Const, Matrix2, Matrix4, SMatrix, SVector, Vector4};
use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian;

/// Planar state `(x, ẋ, y, ẏ)`: positions in metres, velocities in m/s.
pub type StateVector = Vector4<f64>;

/// Component indices into a [`StateVector`].
pub const X: usize = 0;
pub const VX: usize = 1;
pub const Y: usize = 2;
pub const VY: usize = 3;

pub fn state(x: f64, vx: f64, y: f64, vy: f64) -> StateVector {
    Vector4::new(x, vx, y, vy)
}

/// Markov transition density `p(x_k | x_{k-1})` of a state-space model.
pub trait TransitionModel<const D: usize>: Sync {
    fn sample<R: Rng + ?Sized>(&self, prev: &SVector<f64, D>, rng: &mut R) -> SVector<f64, D>;

    fn log_density(&self, next: &SVector<f64, D>, prev: &SVector<f64, D>) -> f64;

    /// Gradient of `log p(next | prev)` with respect to `next`.
    fn grad_log_density(&self, next: &SVector<f64, D>, prev: &SVector<f64, D>) -> SVector<f64, D>;

    /// Expected negative Hessian of `log p(next | prev)` in `next`.
    fn information(&self) -> SMatrix<f64, D, D>;

    /// Deterministic prediction `E[next | prev]`.
    fn predict(&self, prev: &SVector<f64, D>) -> SVector<f64, D>;
}

/// NCV model with Kronecker-structured transition and process noise.
#[derive(Debug, Clone)]
pub struct NcvModel {
    pub dt: f64,
    pub sigma_ax: f64,
    pub sigma_ay: f64,
    pub a: Matrix4<f64>,
    pub q: Matrix4<f64>,
    pub q_inv: Matrix4<f64>,
    pub q_logdet: f64,
    q_chol: Matrix4<f64>,
}

fn kron2(lhs: &Matrix2<f64>, rhs: &Matrix2<f64>) -> Matrix4<f64> {
    Matrix4::from_fn(|i, j| lhs[(i / 2, j / 2)] * rhs[(i % 2, j % 2)])
}

impl NcvModel {
    pub fn new(dt: f64, sigma_ax: f64, sigma_ay: f64) -> Result<Self> {
        for (name, v) in [("dt", dt), ("sigma_ax", sigma_ax), ("sigma_ay", sigma_ay)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let block_a = Matrix2::new(1.0, dt, 0.0, 1.0);
        let a = kron2(&Matrix2::identity(), &block_a);
        let block_q = Matrix2::new(
            dt.powi(3) / 3.0,
            dt.powi(2) / 2.0,
            dt.powi(2) / 2.0,
            dt,
        );
        let accel = Matrix2::new(sigma_ax * sigma_ax, 0.0, 0.0, sigma_ay * sigma_ay);
        let q = kron2(&accel, &block_q);
        let chol = Cholesky::<f64, Const<4>>::new(q)
            .ok_or_else(|| Error::Numerical("process noise covariance is not positive definite".into()))?;
        let q_chol = chol.l();
        let q_logdet = 2.0 * q_chol.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let q_inv = gaussian::symmetrize(&chol.inverse());
        Ok(Self { dt, sigma_ax, sigma_ay, a, q, q_inv, q_logdet, q_chol })
    }
}

impl TransitionModel<4> for NcvModel {
    fn sample<R: Rng + ?Sized>(&self, prev: &StateVector, rng: &mut R) -> StateVector {
        self.a * prev + self.q_chol * gaussian::standard_normal::<4, R>(rng)
    }

    fn log_density(&self, next: &StateVector, prev: &StateVector) -> f64 {
        gaussian::log_density(next, &(self.a * prev), &self.q_inv, self.q_logdet)
    }

    fn grad_log_density(&self, next: &StateVector, prev: &StateVector) -> StateVector {
        -(self.q_inv * (next - self.a * prev))
    }

    fn information(&self) -> Matrix4<f64> {
        self.q_inv
    }

    fn predict(&self, prev: &StateVector) -> StateVector {
        self.a * prev
    }
}
