//! Single-target scenario generation, Monte Carlo batches, and the
//! RMSE / particle-diversity metrics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{
    bootstrap_step, distinct_count, rlmcf_step, smcmc_prior_step, FilterConfig, FilterKind, ParticleCloud,
};
use crate::mcmc::EmpiricalPosterior;
use crate::motion::{state, NcvModel, StateVector, VX, VY, X, Y};
use crate::par;
use crate::rng::{derive_seed, stream, substream};
use crate::sensor::{polar_of, Measurement, SensorModel};

/// Trajectory and initialization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Number of measurement frames K.
    pub n_steps: usize,
    /// Target speed [m/s].
    pub speed: f64,
    /// Initial range [m] and bearing [rad] of the target.
    pub start_range: f64,
    pub start_bearing: f64,
    /// Direction of travel [rad], counter-clockwise from east.
    pub heading: f64,
    pub n_runs: usize,
    pub master_seed: u64,
    /// Area of the uniform initial position box [m²].
    pub init_position_area: f64,
    /// Area of the uniform initial velocity box [m²/s²].
    pub init_velocity_area: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_steps: 30,
            speed: 180.0 / 3.6,
            start_range: 24e3,
            start_bearing: 0.0,
            heading: 3.0 * std::f64::consts::FRAC_PI_4,
            n_runs: 50,
            master_seed: 2019,
            init_position_area: 1e6,
            init_velocity_area: 100.0,
        }
    }
}

impl ScenarioConfig {
    pub fn start_state(&self) -> StateVector {
        let (s, c) = self.heading.sin_cos();
        let (sb, cb) = self.start_bearing.sin_cos();
        state(self.start_range * cb, self.speed * c, self.start_range * sb, self.speed * s)
    }
}

/// Noiseless straight-line truth and the frames it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// `K + 1` states, including the initial one.
    pub trajectory: Vec<StateVector>,
    /// `K` frames; frame `k - 1` observes `trajectory[k]`.
    pub measurements: Vec<Measurement>,
    pub seed: u64,
}

#[derive(Serialize)]
struct ScenarioRecord<'a> {
    seed: u64,
    trajectory: Vec<[f64; 4]>,
    measurements: &'a [Measurement],
}

impl Scenario {
    pub fn n_steps(&self) -> usize {
        self.measurements.len()
    }

    pub fn to_json(&self) -> Result<String> {
        let record = ScenarioRecord {
            seed: self.seed,
            trajectory: self.trajectory.iter().map(|s| [s[0], s[1], s[2], s[3]]).collect(),
            measurements: &self.measurements,
        };
        serde_json::to_string(&record).map_err(|e| Error::Interface(e.to_string()))
    }
}

/// Constant-velocity truth from the configured start; every state must stay
/// inside the sensor's field of view.
pub fn generate_trajectory(cfg: &ScenarioConfig, dt: f64, sensor: &SensorModel) -> Result<Vec<StateVector>> {
    let start = cfg.start_state();
    let ((r_lo, r_hi), (b_lo, b_hi)) = sensor.field_of_view();
    (0..=cfg.n_steps)
        .map(|k| {
            let t = k as f64 * dt;
            let s = state(start[X] + t * start[VX], start[VX], start[Y] + t * start[VY], start[VY]);
            let (r, b) = polar_of(&s).map_err(|e| Error::Scenario(e.to_string()))?;
            if !(r_lo..=r_hi).contains(&r) || !(b_lo..=b_hi).contains(&b) {
                return Err(Error::Scenario(format!(
                    "trajectory leaves the field of view at step {k}: range {r:.1} m, bearing {b:.4} rad"
                )));
            }
            Ok(s)
        })
        .collect()
}

pub fn generate_scenario<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    dt: f64,
    sensor: &SensorModel,
    seed: u64,
    rng: &mut R,
) -> Result<Scenario> {
    let trajectory = generate_trajectory(cfg, dt, sensor)?;
    let measurements = trajectory[1..]
        .iter()
        .map(|s| sensor.simulate_measurement(s, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(Scenario { trajectory, measurements, seed })
}

/// Uniform initial cloud: positions in a square of area `position_area`
/// and velocities in a square of area `velocity_area`, both centred on
/// `truth`.
pub fn init_particles<R: Rng + ?Sized>(
    truth: &StateVector,
    n: usize,
    position_area: f64,
    velocity_area: f64,
    rng: &mut R,
) -> Vec<StateVector> {
    let hp = 0.5 * position_area.sqrt();
    let hv = 0.5 * velocity_area.sqrt();
    (0..n)
        .map(|_| {
            state(
                truth[X] + rng.random_range(-hp..hp),
                truth[VX] + rng.random_range(-hv..hv),
                truth[Y] + rng.random_range(-hp..hp),
                truth[VY] + rng.random_range(-hv..hv),
            )
        })
        .collect()
}

/// A filter as it appears in a batch: configuration plus output label.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedFilter {
    pub label: String,
    pub config: FilterConfig,
}

/// Everything a batch needs.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub motion: NcvModel,
    pub sensor: SensorModel,
    pub scenario: ScenarioConfig,
    pub filters: Vec<NamedFilter>,
}

/// Per-step output of one filter in one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterTrace {
    pub estimates: Vec<StateVector>,
    pub distinct: Vec<usize>,
    pub joint_acceptance: Vec<f64>,
    pub refine_acceptance: Vec<f64>,
    /// Set when the filter aborted; the trace is then incomplete.
    pub failure: Option<String>,
}

impl FilterTrace {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    /// Truth at steps `1..=K`.
    pub truth: Vec<StateVector>,
    /// One trace per configured filter, in configuration order.
    pub traces: Vec<FilterTrace>,
}

pub fn run_filter<R: Rng + ?Sized>(
    cfg: &FilterConfig,
    initial: Vec<StateVector>,
    measurements: &[Measurement],
    sensor: &SensorModel,
    motion: &NcvModel,
    rng: &mut R,
) -> FilterTrace {
    let mut trace = FilterTrace::default();
    let result = (|| -> Result<()> {
        match cfg.kind {
            FilterKind::Rlmcf | FilterKind::SmcmcPrior => {
                let mut posterior = EmpiricalPosterior::new(initial)?;
                for z in measurements {
                    let (next, diag) = if cfg.kind == FilterKind::Rlmcf {
                        rlmcf_step(&posterior, z, sensor, motion, cfg, rng)?
                    } else {
                        smcmc_prior_step(&posterior, z, sensor, motion, cfg, rng)?
                    };
                    trace.estimates.push(crate::filters::point_estimate(next.particles(), None)?);
                    trace.distinct.push(distinct_count(next.particles()));
                    trace.joint_acceptance.push(diag.joint_acceptance_rate());
                    trace.refine_acceptance.push(diag.refine_acceptance_rate());
                    posterior = next;
                }
            }
            FilterKind::Bootstrap => {
                let mut cloud = ParticleCloud::unweighted(initial);
                for z in measurements {
                    let (next, _) = bootstrap_step(&cloud, z, sensor, motion, cfg, rng)?;
                    trace.estimates.push(next.mean()?);
                    trace.distinct.push(distinct_count(&next.particles));
                    trace.joint_acceptance.push(f64::NAN);
                    trace.refine_acceptance.push(f64::NAN);
                    cloud = next;
                }
            }
        }
        Ok(())
    })();
    if let Err(e) = result {
        trace.failure = Some(e.to_string());
    }
    trace
}

impl Experiment {
    /// Runs one Monte Carlo replicate with substreams derived from
    /// `master_seed`.
    pub fn run_single(&self, run: usize, master_seed: u64) -> Result<RunResult> {
        let run_id = run as u64;
        let seed = derive_seed(master_seed, &[run_id, stream::SCENARIO]);
        let mut scenario_rng = substream(master_seed, &[run_id, stream::SCENARIO]);
        let scenario = generate_scenario(&self.scenario, self.motion.dt, &self.sensor, seed, &mut scenario_rng)?;
        let traces = self
            .filters
            .iter()
            .enumerate()
            .map(|(f, named)| {
                let mut init_rng = substream(master_seed, &[run_id, stream::INIT, f as u64]);
                let initial = init_particles(
                    &scenario.trajectory[0],
                    named.config.n_particles,
                    self.scenario.init_position_area,
                    self.scenario.init_velocity_area,
                    &mut init_rng,
                );
                let mut filter_rng = substream(master_seed, &[run_id, stream::FILTER, f as u64]);
                run_filter(&named.config, initial, &scenario.measurements, &self.sensor, &self.motion, &mut filter_rng)
            })
            .collect();
        Ok(RunResult { run, seed, truth: scenario.trajectory[1..].to_vec(), traces })
    }

    /// Runs `n_runs` independent replicates (concurrently when the
    /// `parallel` feature is on) and aggregates the metrics.
    pub fn run_batch(&self, n_runs: usize, master_seed: u64) -> Result<(Vec<RunResult>, BatchMetrics)> {
        if n_runs == 0 {
            return Err(Error::Parameter("n_runs must be at least 1".into()));
        }
        let runs = par::map_range(n_runs, |r| self.run_single(r, master_seed))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let labels: Vec<String> = self.filters.iter().map(|f| f.label.clone()).collect();
        let metrics = aggregate(&labels, &runs)?;
        Ok((runs, metrics))
    }
}

/// Aggregate errors of one filter over the completed runs.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterMetrics {
    pub label: String,
    pub rmse_x: Vec<f64>,
    pub rmse_y: Vec<f64>,
    pub completed_runs: usize,
    pub failed_runs: usize,
    /// Distinct particles at the final step, over completed runs.
    pub final_distinct_min: Option<usize>,
    pub final_distinct_max: Option<usize>,
}

impl FilterMetrics {
    /// `sqrt(rmse_x² + rmse_y²)` per step.
    pub fn position_rmse(&self) -> Vec<f64> {
        self.rmse_x.iter().zip(&self.rmse_y).map(|(x, y)| x.hypot(*y)).collect()
    }

    /// Position RMSE averaged over steps `from_step..=K` (1-based).
    pub fn time_averaged_position_rmse(&self, from_step: usize) -> f64 {
        let pos = self.position_rmse();
        let start = from_step.saturating_sub(1).min(pos.len());
        let tail = &pos[start..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchMetrics {
    pub n_runs: usize,
    pub filters: Vec<FilterMetrics>,
}

impl BatchMetrics {
    pub fn filter(&self, label: &str) -> Option<&FilterMetrics> {
        self.filters.iter().find(|f| f.label == label)
    }
}

/// Per-step RMSE over runs, `sqrt(mean_runs (est - truth)²)`, for each axis.
pub fn rmse_per_step(truths: &[&[StateVector]], estimates: &[&[StateVector]]) -> Result<(Vec<f64>, Vec<f64>)> {
    if truths.len() != estimates.len() || truths.is_empty() {
        return Err(Error::Interface("need matching, non-empty truth and estimate sets".into()));
    }
    let steps = truths[0].len();
    if truths.iter().chain(estimates).any(|t| t.len() != steps) {
        return Err(Error::Interface("all runs must cover the same number of steps".into()));
    }
    let n = truths.len() as f64;
    let axis = |idx: usize| -> Vec<f64> {
        (0..steps)
            .map(|k| {
                let sq: f64 = truths.iter().zip(estimates).map(|(t, e)| (e[k][idx] - t[k][idx]).powi(2)).sum();
                (sq / n).sqrt()
            })
            .collect()
    };
    Ok((axis(X), axis(Y)))
}

pub fn aggregate(labels: &[String], runs: &[RunResult]) -> Result<BatchMetrics> {
    let steps = runs.first().map_or(0, |r| r.truth.len());
    let filters = labels
        .iter()
        .enumerate()
        .map(|(f, label)| {
            let done: Vec<&RunResult> = runs.iter().filter(|r| r.traces[f].completed()).collect();
            let failed_runs = runs.len() - done.len();
            let (rmse_x, rmse_y) = if done.is_empty() {
                (vec![f64::NAN; steps], vec![f64::NAN; steps])
            } else {
                let truths: Vec<&[StateVector]> = done.iter().map(|r| r.truth.as_slice()).collect();
                let ests: Vec<&[StateVector]> = done.iter().map(|r| r.traces[f].estimates.as_slice()).collect();
                rmse_per_step(&truths, &ests)?
            };
            let finals = done.iter().filter_map(|r| r.traces[f].distinct.last().copied());
            Ok(FilterMetrics {
                label: label.clone(),
                rmse_x,
                rmse_y,
                completed_runs: done.len(),
                failed_runs,
                final_distinct_min: finals.clone().min(),
                final_distinct_max: finals.max(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchMetrics { n_runs: runs.len(), filters })
}
