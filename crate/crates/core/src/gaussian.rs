//! Small multivariate-normal helpers shared by the motion model and the
//! Langevin proposal.

use nalgebra::{SMatrix, SVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// ln(2π)
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn standard_normal<const D: usize, R: Rng + ?Sized>(rng: &mut R) -> SVector<f64, D> {
    SVector::<f64, D>::from_fn(|_, _| rng.sample(StandardNormal))
}

/// log N(x; mean, Σ) given Σ⁻¹ and ln det Σ.
pub fn log_density<const D: usize>(
    x: &SVector<f64, D>,
    mean: &SVector<f64, D>,
    precision: &SMatrix<f64, D, D>,
    log_det_cov: f64,
) -> f64 {
    let d = x - mean;
    let quad = d.dot(&(precision * d));
    -0.5 * (D as f64 * LN_2PI + log_det_cov + quad)
}

/// Symmetrizes a matrix in place, `(M + Mᵀ)/2`.
pub fn symmetrize<const D: usize>(m: &SMatrix<f64, D, D>) -> SMatrix<f64, D, D> {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix1, Vector1};

    #[test]
    fn univariate_standard_normal_at_zero() {
        let v = log_density(
            &Vector1::new(0.0),
            &Vector1::new(0.0),
            &Matrix1::new(1.0),
            0.0,
        );
        assert!((v - (-0.918_938_533_204_672_7)).abs() < 1e-15);
    }
}
