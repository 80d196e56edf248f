//! Riemann-Langevin Monte Carlo particle filtering for track-before-detect.
//!
//! The crate provides the nearly-constant-velocity motion model
//! ([`motion`]), the range-bearing imaging likelihood with its gradient and
//! Fisher information ([`sensor`]), the sequential MCMC machinery
//! ([`mcmc`]) and Riemann-Langevin proposal ([`proposal`]), the three
//! filters under comparison ([`filters`]), and a Monte Carlo experiment
//! harness ([`experiment`], [`report`], [`config`]).
//!
//! With the default `parallel` feature, Monte Carlo runs and bootstrap
//! likelihood evaluations use rayon. Results do not depend on the feature.

pub mod config;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod gaussian;
pub mod linear;
pub mod mcmc;
pub mod motion;
pub mod par;
pub mod proposal;
pub mod report;
pub mod rng;
pub mod selftest;
pub mod sensor;

pub use error::{Error, Result};
pub use motion::{state, NcvModel, StateVector, TransitionModel};
pub use sensor::{Measurement, MeasurementModel, SensorModel, SensorParams};
