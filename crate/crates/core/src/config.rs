//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{generate_trajectory, Experiment, NamedFilter, ScenarioConfig};
use crate::filters::{FilterConfig, FilterKind, ResamplingScheme};
use crate::motion::NcvModel;
use crate::proposal::{MetricMode, RlProposalParams};
use crate::sensor::{finite_interval, snr_to_amplitude, SensorModel, SensorParams, DEFAULT_GATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionConfig {
    pub dt: f64,
    pub sigma_ax: f64,
    pub sigma_ay: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self { dt: 1.0, sigma_ax: 0.1, sigma_ay: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub range_psf: f64,
    pub bearing_psf: f64,
    pub range_resolution: f64,
    pub bearing_resolution: f64,
    pub range_min: f64,
    pub range_max: f64,
    pub bearing_min: f64,
    pub bearing_max: f64,
    pub sigma_w: f64,
    pub snr_db: f64,
    /// Skip grid rows/columns whose PSF factor is negligible.
    #[serde(default)]
    pub gate: bool,
}

impl Default for SensorConfig {
    fn default() -> Self {
        let p = SensorParams::default();
        Self {
            range_psf: p.range_psf,
            bearing_psf: p.bearing_psf,
            range_resolution: p.range_resolution,
            bearing_resolution: p.bearing_resolution,
            range_min: p.range_min,
            range_max: p.range_max,
            bearing_min: p.bearing_min,
            bearing_max: p.bearing_max,
            sigma_w: p.sigma_w,
            snr_db: 80.0,
            gate: false,
        }
    }
}

impl SensorConfig {
    pub fn params(&self) -> SensorParams {
        SensorParams {
            range_psf: self.range_psf,
            bearing_psf: self.bearing_psf,
            range_resolution: self.range_resolution,
            bearing_resolution: self.bearing_resolution,
            range_min: self.range_min,
            range_max: self.range_max,
            bearing_min: self.bearing_min,
            bearing_max: self.bearing_max,
            sigma_w: self.sigma_w,
            amplitude: snr_to_amplitude(self.sigma_w, self.snr_db),
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterEntry {
    pub kind: FilterKind,
    /// Column label in outputs; defaults to the kind name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub n_particles: usize,
    #[serde(default)]
    pub n_burn_in: usize,
    #[serde(default)]
    pub resampling: ResamplingScheme,
    /// Langevin refinement moves; only read for `rlmcf`.
    #[serde(default = "default_true")]
    pub refinement: bool,
}

impl FilterEntry {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    fn to_filter_config(&self, proposal: RlProposalParams) -> FilterConfig {
        FilterConfig {
            kind: self.kind,
            n_particles: self.n_particles,
            n_burn_in: self.n_burn_in,
            proposal,
            resampling: self.resampling,
            refinement: self.kind == FilterKind::Rlmcf && self.refinement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub motion: MotionConfig,
    pub sensor: SensorConfig,
    pub scenario: ScenarioConfig,
    pub proposal: RlProposalParams,
    pub filters: Vec<FilterEntry>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            motion: MotionConfig::default(),
            sensor: SensorConfig::default(),
            scenario: ScenarioConfig::default(),
            proposal: RlProposalParams { epsilon: 1.0, metric: MetricMode::Riemann },
            filters: vec![
                FilterEntry {
                    kind: FilterKind::Rlmcf,
                    label: None,
                    n_particles: 400,
                    n_burn_in: 100,
                    resampling: ResamplingScheme::Systematic,
                    refinement: true,
                },
                FilterEntry {
                    kind: FilterKind::SmcmcPrior,
                    label: None,
                    n_particles: 3000,
                    n_burn_in: 100,
                    resampling: ResamplingScheme::Systematic,
                    refinement: true,
                },
                FilterEntry {
                    kind: FilterKind::Bootstrap,
                    label: None,
                    n_particles: 5000,
                    n_burn_in: 0,
                    resampling: ResamplingScheme::Systematic,
                    refinement: true,
                },
            ],
        }
    }
}

fn key_err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{key}: {msg}"))
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(key_err(key, format!("must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every module precondition, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        positive("motion.dt", self.motion.dt)?;
        positive("motion.sigma_ax", self.motion.sigma_ax)?;
        positive("motion.sigma_ay", self.motion.sigma_ay)?;

        let s = &self.sensor;
        positive("sensor.range_psf", s.range_psf)?;
        positive("sensor.bearing_psf", s.bearing_psf)?;
        positive("sensor.range_resolution", s.range_resolution)?;
        positive("sensor.bearing_resolution", s.bearing_resolution)?;
        positive("sensor.sigma_w", s.sigma_w)?;
        if !s.snr_db.is_finite() {
            return Err(key_err("sensor.snr_db", "must be finite"));
        }
        if !finite_interval(s.range_min, s.range_max) {
            return Err(key_err("sensor.range_min", "must be below sensor.range_max"));
        }
        if !finite_interval(s.bearing_min, s.bearing_max) {
            return Err(key_err("sensor.bearing_min", "must be below sensor.bearing_max"));
        }
        if s.range_min < 0.0 {
            return Err(key_err("sensor.range_min", "must be non-negative"));
        }

        let sc = &self.scenario;
        positive("scenario.speed", sc.speed)?;
        positive("scenario.start_range", sc.start_range)?;
        positive("scenario.init_position_area", sc.init_position_area)?;
        positive("scenario.init_velocity_area", sc.init_velocity_area)?;
        if !sc.start_bearing.is_finite() {
            return Err(key_err("scenario.start_bearing", "must be finite"));
        }
        if !sc.heading.is_finite() {
            return Err(key_err("scenario.heading", "must be finite"));
        }
        if sc.n_runs == 0 {
            return Err(key_err("scenario.n_runs", "must be at least 1"));
        }

        positive("proposal.epsilon", self.proposal.epsilon)?;

        if self.filters.is_empty() {
            return Err(key_err("filters", "at least one filter is required"));
        }
        let mut labels = std::collections::HashSet::new();
        for (i, f) in self.filters.iter().enumerate() {
            if f.n_particles == 0 {
                return Err(key_err(&format!("filters[{i}].n_particles"), "must be positive"));
            }
            if !labels.insert(f.label()) {
                return Err(key_err(&format!("filters[{i}].label"), format!("duplicate label {}", f.label())));
            }
        }

        let sensor = self.sensor_model().map_err(|e| key_err("sensor", e))?;
        generate_trajectory(sc, self.motion.dt, &sensor).map_err(|e| key_err("scenario", e))?;
        Ok(())
    }

    pub fn motion_model(&self) -> Result<NcvModel> {
        NcvModel::new(self.motion.dt, self.motion.sigma_ax, self.motion.sigma_ay)
    }

    pub fn sensor_model(&self) -> Result<SensorModel> {
        let gate = self.sensor.gate.then_some(DEFAULT_GATE);
        Ok(SensorModel::new(self.sensor.params())?.with_gate(gate))
    }

    pub fn named_filters(&self) -> Vec<NamedFilter> {
        self.filters
            .iter()
            .map(|f| NamedFilter { label: f.label(), config: f.to_filter_config(self.proposal) })
            .collect()
    }

    /// Keeps only filters whose label or kind name is in `names`.
    pub fn retain_filters(&mut self, names: &[String]) -> Result<()> {
        for n in names {
            if !self.filters.iter().any(|f| &f.label() == n || f.kind.name() == n) {
                return Err(key_err("--filter", format!("no configured filter named {n}")));
            }
        }
        self.filters.retain(|f| names.iter().any(|n| *n == f.label() || n == f.kind.name()));
        Ok(())
    }

    pub fn experiment(&self) -> Result<Experiment> {
        Ok(Experiment {
            motion: self.motion_model()?,
            sensor: self.sensor_model()?,
            scenario: self.scenario.clone(),
            filters: self.named_filters(),
        })
    }
}
