//! Detection of undeclared EV charging events between certified charging
//! stations.
//!
//! The pipeline: a GPS trip record (1 s speed/altitude samples) is pushed
//! through a discrete-time vehicle energy model to obtain the cumulative
//! energy drawn from the battery over the interval between two certified
//! charges. The unknowns of that model — passenger mass and average
//! auxiliary power — are integrated out by Monte Carlo, yielding a binned
//! predictive distribution. The observed differential state-of-charge is
//! then Bayes-classified against a two-component mixture: the predictive
//! distribution itself (no hidden charging) versus its discrete correlation
//! with a uniform slab of undeclared energy (hidden charging).
//!
//! Modules:
//!
//! - [`physics`] — deterministic battery-draw model over a trip log
//! - [`trip`] — GPS trip-log data model, validation, CSV ingestion
//! - [`models`] — priors: passenger-mass GMM, seasonal Gamma auxiliary
//!   power, slab-and-spike undeclared energy
//! - [`predictor`] — Monte Carlo predictive distribution and histograms
//! - [`detector`] — discrete correlation, Bayes posterior, ternary decision,
//!   prior propagation, probability-weighted bonus
//! - [`sim`] — synthetic trip generator and the Monte Carlo study harness
//! - [`config`] — key-value configuration files and driver-state persistence

pub mod config;
pub mod detector;
pub mod models;
pub mod physics;
pub mod predictor;
mod seeds;
pub mod sim;
pub mod trip;

pub use detector::{
    posterior_h1, ternary_decision, update_prior, weighted_bonus, xd_dist_h1, Decision,
    DecisionThresholds, Detector, DetectorOutput, SocPair, SupportFlag,
};
pub use models::{
    gamma_from_moments, AuxPowerModel, GammaParams, Hypothesis, MassModel, UndeclaredModel,
};
pub use physics::{cumulative_draw, energy_step, vehicle_energy, EnergyStep, EvParams, PhysicsConstants};
pub use predictor::{predict_xc, DistStats, EmpiricalDist};
pub use sim::{
    generate_trip_log, run_mc_study, scenario_sweep, simulate_observation, ConfusionMatrix,
    DriverScenario, Observation, StudyConfig, StudyReport, SweepConfig, SweepResult,
    TripGenConfig,
};
pub use trip::{infer_season, GpsSample, MonthMap, Season, TripLog};
