//! Range-bearing imaging sensor for track-before-detect.
//!
//! Each cell `j` of a polar grid reports `z_j = A·h_j(x) + w_j` with
//! `w_j ~ N(0, σ_w²)` and a Gaussian point spread function
//! `h_j(x) = exp(-(r_j - r)²/(2R) - (b_j - b)²/(2B))`.
//!
//! The PSF is separable in range and bearing, so one evaluation needs
//! `n_range + n_bearing` exponentials rather than `J`. The log-likelihood is
//! evaluated as
//!
//! ```text
//! log p(z|x) = c(z) + Σ_j (z_j ŷ_j - ŷ_j²/2) / σ_w²
//! c(z)       = -J/2 · ln(2πσ_w²) - Σ_j z_j² / (2σ_w²)
//! ```
//!
//! which is the exact sum of per-cell Gaussian log-densities. `c(z)` does
//! not depend on the state and cancels in every acceptance ratio.

use std::io::Write;

use nalgebra::{Matrix2, Matrix4, SMatrix, SVector, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::LN_2PI;
use crate::motion::{StateVector, X, Y};

/// Observation density `p(z | x)` with the derivatives the Langevin
/// proposal needs.
pub trait MeasurementModel<const D: usize>: Sync {
    type Measurement: Sync;

    fn log_likelihood(&self, z: &Self::Measurement, x: &SVector<f64, D>) -> Result<f64>;

    fn log_likelihood_gradient(
        &self,
        z: &Self::Measurement,
        x: &SVector<f64, D>,
    ) -> Result<SVector<f64, D>>;

    /// Expected Fisher information of the likelihood at `x`.
    fn fisher_information(&self, x: &SVector<f64, D>) -> Result<SMatrix<f64, D, D>>;

    fn log_likelihood_with_gradient(
        &self,
        z: &Self::Measurement,
        x: &SVector<f64, D>,
    ) -> Result<(f64, SVector<f64, D>)> {
        Ok((self.log_likelihood(z, x)?, self.log_likelihood_gradient(z, x)?))
    }
}

/// `lo < hi` with both ends finite.
pub(crate) fn finite_interval(lo: f64, hi: f64) -> bool {
    lo.is_finite() && hi.is_finite() && lo < hi
}

/// Converts an SNR in decibels, `20·log10(A/σ_w)`, to the signal amplitude.
pub fn snr_to_amplitude(sigma_w: f64, snr_db: f64) -> f64 {
    sigma_w * 10f64.powf(snr_db / 20.0)
}

/// Range and bearing of a position seen from the sensor at the origin.
/// Bearing is measured from the east (x) axis, counter-clockwise.
pub fn polar_of(state: &StateVector) -> Result<(f64, f64)> {
    let (x, y) = (state[X], state[Y]);
    if !(x.is_finite() && y.is_finite()) {
        return Err(Error::Domain(format!("non-finite position ({x}, {y})")));
    }
    if x == 0.0 && y == 0.0 {
        return Err(Error::Domain("polar coordinates undefined at the sensor origin".into()));
    }
    Ok((x.hypot(y), y.atan2(x)))
}

/// Sensor constants as they appear in a parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorParams {
    /// Range PSF constant R [m²].
    pub range_psf: f64,
    /// Bearing PSF constant B [rad²].
    pub bearing_psf: f64,
    pub range_resolution: f64,
    pub bearing_resolution: f64,
    pub range_min: f64,
    pub range_max: f64,
    pub bearing_min: f64,
    pub bearing_max: f64,
    pub sigma_w: f64,
    pub amplitude: f64,
}

/// One frame of cell intensities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Measurement {
    z: Vec<f64>,
    sum_sq: f64,
}

impl TryFrom<Vec<f64>> for Measurement {
    type Error = Error;

    fn try_from(z: Vec<f64>) -> Result<Self> {
        Self::new(z)
    }
}

impl From<Measurement> for Vec<f64> {
    fn from(m: Measurement) -> Self {
        m.z
    }
}

impl Measurement {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if let Some(bad) = z.iter().find(|v| !v.is_finite()) {
            return Err(Error::Interface(format!("non-finite cell intensity {bad}")));
        }
        let sum_sq = z.iter().map(|v| v * v).sum();
        Ok(Self { z, sum_sq })
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

impl Default for SensorParams {
    /// Surveillance sensor of the reference low-noise scenario
    /// (σ_w = 1e-4 at 80 dB SNR, hence A = 1).
    fn default() -> Self {
        let sigma_w = 1e-4;
        Self {
            range_psf: 1.56e6,
            bearing_psf: 1.88e-4,
            range_resolution: 500.0,
            bearing_resolution: 5e-3,
            range_min: 22e3,
            range_max: 26e3,
            bearing_min: -std::f64::consts::FRAC_PI_6,
            bearing_max: std::f64::consts::FRAC_PI_6,
            sigma_w,
            amplitude: snr_to_amplitude(sigma_w, 80.0),
        }
    }
}

/// Per-evaluation PSF factors over the active part of the grid.
struct Footprint {
    range: f64,
    bearing: f64,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
    fr: Vec<f64>,
    fb: Vec<f64>,
}

/// Polar grid sensor.
#[derive(Debug, Clone)]
pub struct SensorModel {
    params: SensorParams,
    n_range: usize,
    n_bearing: usize,
    range_lo: f64,
    bearing_lo: f64,
    /// PSF factor below which a grid row/column is skipped; `None` evaluates
    /// every cell.
    gate: Option<f64>,
}

/// Default PSF cut-off used when gating is enabled. Skipped terms are below
/// `|z|·A·1e-20/σ_w²`, far under f64 resolution of a log-likelihood.
pub const DEFAULT_GATE: f64 = 1e-20;

impl SensorModel {
    /// Builds the grid. Cell counts are `round(extent/resolution)` and the
    /// realized grid is centred on the midpoint of each requested interval.
    pub fn new(params: SensorParams) -> Result<Self> {
        let positive = [
            ("range_psf", params.range_psf),
            ("bearing_psf", params.bearing_psf),
            ("range_resolution", params.range_resolution),
            ("bearing_resolution", params.bearing_resolution),
            ("sigma_w", params.sigma_w),
            ("amplitude", params.amplitude),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !finite_interval(params.range_min, params.range_max) {
            return Err(Error::Parameter("range_min must be below range_max".into()));
        }
        if !finite_interval(params.bearing_min, params.bearing_max) {
            return Err(Error::Parameter("bearing_min must be below bearing_max".into()));
        }
        let n_range = ((params.range_max - params.range_min) / params.range_resolution).round() as usize;
        let n_bearing =
            ((params.bearing_max - params.bearing_min) / params.bearing_resolution).round() as usize;
        if n_range == 0 || n_bearing == 0 {
            return Err(Error::Parameter("grid has no cells: resolution exceeds extent".into()));
        }
        let range_mid = 0.5 * (params.range_min + params.range_max);
        let bearing_mid = 0.5 * (params.bearing_min + params.bearing_max);
        let range_lo = range_mid - 0.5 * n_range as f64 * params.range_resolution;
        let bearing_lo = bearing_mid - 0.5 * n_bearing as f64 * params.bearing_resolution;
        Ok(Self { params, n_range, n_bearing, range_lo, bearing_lo, gate: None })
    }

    pub fn with_gate(mut self, threshold: Option<f64>) -> Self {
        self.gate = threshold;
        self
    }

    pub fn with_sigma_w(&self, sigma_w: f64) -> Result<Self> {
        let mut params = self.params.clone();
        params.sigma_w = sigma_w;
        Ok(Self::new(params)?.with_gate(self.gate))
    }

    pub fn params(&self) -> &SensorParams {
        &self.params
    }

    pub fn sigma_w(&self) -> f64 {
        self.params.sigma_w
    }

    pub fn amplitude(&self) -> f64 {
        self.params.amplitude
    }

    pub fn gate(&self) -> Option<f64> {
        self.gate
    }

    /// `(n_range, n_bearing)`.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.n_range, self.n_bearing)
    }

    pub fn n_cells(&self) -> usize {
        self.n_range * self.n_bearing
    }

    /// Realized field of view `((r_lo, r_hi), (b_lo, b_hi))`.
    pub fn field_of_view(&self) -> ((f64, f64), (f64, f64)) {
        (
            (self.range_lo, self.range_lo + self.n_range as f64 * self.params.range_resolution),
            (self.bearing_lo, self.bearing_lo + self.n_bearing as f64 * self.params.bearing_resolution),
        )
    }

    fn range_centroid(&self, i: usize) -> f64 {
        self.range_lo + (i as f64 + 0.5) * self.params.range_resolution
    }

    fn bearing_centroid(&self, l: usize) -> f64 {
        self.bearing_lo + (l as f64 + 0.5) * self.params.bearing_resolution
    }

    /// Centroid `(r_j, b_j)` of cell `j`; cells are stored range-major.
    pub fn cell(&self, j: usize) -> (f64, f64) {
        (self.range_centroid(j / self.n_bearing), self.bearing_centroid(j % self.n_bearing))
    }

    pub fn cells(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.n_cells()).map(move |j| self.cell(j))
    }

    pub fn psf(&self, cell: usize, state: &StateVector) -> Result<f64> {
        if cell >= self.n_cells() {
            return Err(Error::Interface(format!("cell {cell} out of range 0..{}", self.n_cells())));
        }
        let (r, b) = polar_of(state)?;
        let (rj, bj) = self.cell(cell);
        Ok((-(rj - r).powi(2) / (2.0 * self.params.range_psf)
            - (bj - b).powi(2) / (2.0 * self.params.bearing_psf))
            .exp())
    }

    fn axis_window(&self, center: f64, lo: f64, res: f64, n: usize, psf_const: f64) -> std::ops::Range<usize> {
        match self.gate {
            None => 0..n,
            Some(threshold) => {
                let half = (2.0 * psf_const * (-threshold.ln()).max(0.0)).sqrt();
                let first = ((center - half - lo) / res - 0.5).ceil().max(0.0);
                let last = ((center + half - lo) / res - 0.5).floor();
                if last < 0.0 || first > (n - 1) as f64 {
                    0..0
                } else {
                    (first as usize)..(last.min((n - 1) as f64) as usize + 1)
                }
            }
        }
    }

    fn footprint(&self, state: &StateVector) -> Result<Footprint> {
        let (range, bearing) = polar_of(state)?;
        let p = &self.params;
        let rows = self.axis_window(range, self.range_lo, p.range_resolution, self.n_range, p.range_psf);
        let cols = self.axis_window(bearing, self.bearing_lo, p.bearing_resolution, self.n_bearing, p.bearing_psf);
        let fr = rows
            .clone()
            .map(|i| (-(self.range_centroid(i) - range).powi(2) / (2.0 * p.range_psf)).exp())
            .collect();
        let fb = cols
            .clone()
            .map(|l| (-(self.bearing_centroid(l) - bearing).powi(2) / (2.0 * p.bearing_psf)).exp())
            .collect();
        Ok(Footprint { range, bearing, rows, cols, fr, fb })
    }

    /// Noiseless image `ŷ_j = A·h_j(x)`.
    pub fn predicted_image(&self, state: &StateVector) -> Result<Measurement> {
        let fp = self.footprint(state)?;
        let mut z = vec![0.0; self.n_cells()];
        for (i, fr) in fp.rows.clone().zip(&fp.fr) {
            for (l, fb) in fp.cols.clone().zip(&fp.fb) {
                z[i * self.n_bearing + l] = self.params.amplitude * fr * fb;
            }
        }
        Measurement::new(z)
    }

    pub fn simulate_measurement<R: Rng + ?Sized>(&self, state: &StateVector, rng: &mut R) -> Result<Measurement> {
        let mean = self.predicted_image(state)?;
        let sigma = self.params.sigma_w;
        let z = mean
            .z
            .iter()
            .map(|m| m + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Measurement::new(z)
    }

    /// Log-likelihood of the state-free part, `c(z)`.
    fn baseline(&self, z: &Measurement) -> f64 {
        let var = self.params.sigma_w * self.params.sigma_w;
        -0.5 * self.n_cells() as f64 * (LN_2PI + var.ln()) - z.sum_sq / (2.0 * var)
    }

    fn check_len(&self, z: &Measurement) -> Result<()> {
        if z.len() != self.n_cells() {
            return Err(Error::Interface(format!(
                "measurement has {} cells, sensor grid has {}",
                z.len(),
                self.n_cells()
            )));
        }
        Ok(())
    }

    /// Returns `(log p(z|x), ∂/∂(r, b) log p(z|x))` plus the polar footprint.
    fn evaluate(&self, z: &Measurement, state: &StateVector, want_grad: bool) -> Result<(f64, Vector2<f64>, Footprint)> {
        self.check_len(z)?;
        let fp = self.footprint(state)?;
        let p = &self.params;
        let inv_var = 1.0 / (p.sigma_w * p.sigma_w);
        let mut signal = 0.0;
        let mut g_r = 0.0;
        let mut g_b = 0.0;
        for (i, fr) in fp.rows.clone().zip(&fp.fr) {
            let a_i = (self.range_centroid(i) - fp.range) / p.range_psf;
            let row = &z.z[i * self.n_bearing..(i + 1) * self.n_bearing];
            let mut row_signal = 0.0;
            let mut row_gr = 0.0;
            let mut row_gb = 0.0;
            for (l, fb) in fp.cols.clone().zip(&fp.fb) {
                let yhat = p.amplitude * fr * fb;
                let zj = row[l];
                row_signal += yhat * (zj - 0.5 * yhat);
                if want_grad {
                    let w = (zj - yhat) * yhat;
                    row_gr += w;
                    row_gb += w * (self.bearing_centroid(l) - fp.bearing) / p.bearing_psf;
                }
            }
            signal += row_signal;
            g_r += row_gr * a_i;
            g_b += row_gb;
        }
        let ll = self.baseline(z) + signal * inv_var;
        Ok((ll, Vector2::new(g_r, g_b) * inv_var, fp))
    }

    /// Jacobian of (r, b) with respect to (x, y).
    fn polar_jacobian(state: &StateVector, range: f64) -> Matrix2<f64> {
        let (x, y) = (state[X], state[Y]);
        let r2 = range * range;
        Matrix2::new(x / range, y / range, -y / r2, x / r2)
    }

    fn embed_position_gradient(polar: Vector2<f64>, jac: &Matrix2<f64>) -> StateVector {
        let g = jac.transpose() * polar;
        StateVector::new(g[0], 0.0, g[1], 0.0)
    }

    pub fn log_likelihood(&self, z: &Measurement, state: &StateVector) -> Result<f64> {
        Ok(self.evaluate(z, state, false)?.0)
    }

    pub fn log_likelihood_gradient(&self, z: &Measurement, state: &StateVector) -> Result<StateVector> {
        Ok(self.log_likelihood_with_gradient(z, state)?.1)
    }

    pub fn log_likelihood_with_gradient(&self, z: &Measurement, state: &StateVector) -> Result<(f64, StateVector)> {
        let (ll, polar, fp) = self.evaluate(z, state, true)?;
        let jac = Self::polar_jacobian(state, fp.range);
        Ok((ll, Self::embed_position_gradient(polar, &jac)))
    }

    /// Fisher information of the likelihood; only the position rows and
    /// columns are non-zero.
    pub fn likelihood_fisher(&self, state: &StateVector) -> Result<Matrix4<f64>> {
        let fp = self.footprint(state)?;
        let p = &self.params;
        // ŷ² factorizes, so each polar entry is a product of two 1-D sums.
        let (mut sr0, mut sr1, mut sr2) = (0.0, 0.0, 0.0);
        for (i, fr) in fp.rows.clone().zip(&fp.fr) {
            let a = (self.range_centroid(i) - fp.range) / p.range_psf;
            let w = fr * fr;
            sr0 += w;
            sr1 += w * a;
            sr2 += w * a * a;
        }
        let (mut sb0, mut sb1, mut sb2) = (0.0, 0.0, 0.0);
        for (l, fb) in fp.cols.clone().zip(&fp.fb) {
            let c = (self.bearing_centroid(l) - fp.bearing) / p.bearing_psf;
            let w = fb * fb;
            sb0 += w;
            sb1 += w * c;
            sb2 += w * c * c;
        }
        let scale = p.amplitude * p.amplitude / (p.sigma_w * p.sigma_w);
        let polar = Matrix2::new(sr2 * sb0, sr1 * sb1, sr1 * sb1, sr0 * sb2) * scale;
        let jac = Self::polar_jacobian(state, fp.range);
        let cart = jac.transpose() * polar * jac;
        let mut f = Matrix4::zeros();
        let idx = [X, Y];
        for (a, &ia) in idx.iter().enumerate() {
            for (b, &ib) in idx.iter().enumerate() {
                f[(ia, ib)] = cart[(a, b)];
            }
        }
        // exact symmetry
        f[(Y, X)] = f[(X, Y)];
        Ok(f)
    }

    /// Writes one row per cell: `r,b,z`.
    pub fn write_frame_csv<W: Write>(&self, z: &Measurement, mut out: W) -> Result<()> {
        self.check_len(z)?;
        writeln!(out, "r,b,z")?;
        for ((r, b), v) in self.cells().zip(&z.z) {
            writeln!(out, "{r},{b},{v}")?;
        }
        Ok(())
    }
}

impl MeasurementModel<4> for SensorModel {
    type Measurement = Measurement;

    fn log_likelihood(&self, z: &Measurement, x: &StateVector) -> Result<f64> {
        SensorModel::log_likelihood(self, z, x)
    }

    fn log_likelihood_gradient(&self, z: &Measurement, x: &StateVector) -> Result<StateVector> {
        SensorModel::log_likelihood_gradient(self, z, x)
    }

    fn fisher_information(&self, x: &StateVector) -> Result<Matrix4<f64>> {
        self.likelihood_fisher(x)
    }

    fn log_likelihood_with_gradient(&self, z: &Measurement, x: &StateVector) -> Result<(f64, StateVector)> {
        SensorModel::log_likelihood_with_gradient(self, z, x)
    }
}
