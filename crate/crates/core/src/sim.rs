//! Synthetic trip generation and the Monte Carlo study harness.
//!
//! The trip generator stands in for a traffic microsimulation: speed
//! follows a clamped mean-reverting random walk around a cruise speed with
//! Poisson stop events, altitude follows a smooth bounded-grade walk, and
//! timestamps respect the 1 s in-trip grid with free gaps between trips.
//!
//! The study harness draws driver behaviours hierarchically (hypothesis,
//! undeclared energy, passenger mass, auxiliary power), simulates the
//! observable differential SoC through the energy conservation identity
//! `x_D = x_C - x_U`, runs the detector on each trial, and tallies the
//! ternary decisions into per-season confusion matrices with sensitivity
//! and specificity computed conditional on non-erased trials.

use std::fmt::Write as _;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::Rng;
use thiserror::Error;

use crate::config::{apply_model_overrides, ConfigError, KvMap};
use crate::detector::{
    Decision, DecisionThresholds, Detector, DetectorError, SocPair,
};
use crate::models::{AuxPowerModel, Hypothesis, MassModel, ModelError, UndeclaredModel};
use crate::physics::{cumulative_draw, EvParams, PhysicsConstants, PhysicsError};
use crate::predictor::{predict_xc, DistError, EmpiricalDist};
use crate::seeds::{self, Domain};
use crate::trip::{GpsSample, Season, TripLog, TripLogError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("trip generator config: {0}")]
    InvalidTripConfig(String),
    #[error("scenario inconsistent: {0}")]
    InvalidScenario(String),
    #[error("study config: {0}")]
    InvalidStudyConfig(String),
    #[error(transparent)]
    TripLog(#[from] TripLogError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Parameters of the synthetic trip generator.
#[derive(Debug, Clone, PartialEq)]
pub struct TripGenConfig {
    pub n_trips: usize,
    /// Driving seconds per trip (each trip has this many 1 s steps).
    pub mean_trip_duration_s: u32,
    pub cruise_speed_mps: f64,
    pub accel_limit_mps2: f64,
    /// Per-second probability of initiating a stop while cruising.
    pub stop_prob_per_s: f64,
    /// Bound on |dh/ds|.
    pub max_grade: f64,
    /// Persistence of the grade walk in [0, 1); higher is smoother.
    pub grade_smoothness: f64,
    pub seed: u64,
}

impl Default for TripGenConfig {
    /// Forty trips of 130 s at a 9 m/s cruise: a compact certified interval
    /// (roughly 45 km) that keeps the battery within capacity across both
    /// seasonal auxiliary-power regimes.
    fn default() -> Self {
        TripGenConfig {
            n_trips: 40,
            mean_trip_duration_s: 130,
            cruise_speed_mps: 9.0,
            accel_limit_mps2: 2.0,
            stop_prob_per_s: 0.003,
            max_grade: 0.04,
            grade_smoothness: 0.9,
            seed: 0,
        }
    }
}

impl TripGenConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_trips == 0 {
            return Err(SimError::InvalidTripConfig("n_trips must be >= 1".into()));
        }
        if self.mean_trip_duration_s < 2 {
            return Err(SimError::InvalidTripConfig(
                "mean_trip_duration_s must be >= 2".into(),
            ));
        }
        for (name, v) in [
            ("cruise_speed_mps", self.cruise_speed_mps),
            ("accel_limit_mps2", self.accel_limit_mps2),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidTripConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.stop_prob_per_s.is_finite() && (0.0..1.0).contains(&self.stop_prob_per_s)) {
            return Err(SimError::InvalidTripConfig(
                "stop_prob_per_s must lie in [0, 1)".into(),
            ));
        }
        if !(self.max_grade.is_finite() && self.max_grade >= 0.0) {
            return Err(SimError::InvalidTripConfig("max_grade must be >= 0".into()));
        }
        if !(self.grade_smoothness.is_finite() && (0.0..1.0).contains(&self.grade_smoothness)) {
            return Err(SimError::InvalidTripConfig(
                "grade_smoothness must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// RNG stream for standalone trip generation from a config seed.
pub fn trip_gen_rng(seed: u64) -> impl Rng {
    seeds::rng(seed, Domain::TripGen, 0)
}

fn season_base_time(season: Season) -> DateTime<Utc> {
    match season {
        Season::Summer => Utc.with_ymd_and_hms(2024, 6, 3, 7, 0, 0).unwrap(),
        Season::Winter => Utc.with_ymd_and_hms(2024, 1, 8, 7, 0, 0).unwrap(),
    }
}

enum DrivePhase {
    Cruise,
    Braking,
    Stopped(u32),
}

/// Generates a synthetic multi-trip log satisfying every trip-log
/// invariant, timestamped inside the requested season.
pub fn generate_trip_log(
    cfg: &TripGenConfig,
    season: Season,
    rng: &mut impl Rng,
) -> Result<TripLog, SimError> {
    cfg.validate()?;
    let mut samples = Vec::with_capacity(cfg.n_trips * (cfg.mean_trip_duration_s as usize + 1));
    let mut clock = season_base_time(season);

    for trip in 1..=cfg.n_trips as u32 {
        let duration = cfg.mean_trip_duration_s;
        let mut v: f64 = 0.0;
        let mut h: f64 = rng.random_range(0.0..60.0);
        let mut grade: f64 = 0.0;
        let mut phase = DrivePhase::Cruise;

        for t in 0..=duration {
            samples.push(GpsSample {
                trip_number: trip,
                timestamp: clock + Duration::seconds(t as i64),
                speed_mps: v,
                altitude_m: h,
            });

            // Dynamics feed the next sample; the last loop iteration only
            // emits the final state.
            if t == duration {
                break;
            }
            let remaining = (duration - t) as f64;
            let braking_horizon = v / cfg.accel_limit_mps2 + 1.0;

            h += grade * v;
            grade = (cfg.grade_smoothness * grade
                + (1.0 - cfg.grade_smoothness) * rng.random_range(-cfg.max_grade..=cfg.max_grade))
            .clamp(-cfg.max_grade, cfg.max_grade);

            if remaining <= braking_horizon {
                // Glide to rest so trips end parked.
                v = (v - cfg.accel_limit_mps2).max(0.0);
                continue;
            }
            match phase {
                DrivePhase::Stopped(left) => {
                    v = 0.0;
                    phase = if left > 1 {
                        DrivePhase::Stopped(left - 1)
                    } else {
                        DrivePhase::Cruise
                    };
                }
                DrivePhase::Braking => {
                    v = (v - cfg.accel_limit_mps2).max(0.0);
                    if v == 0.0 {
                        let dwell = rng.random_range(4..=12u32);
                        phase = DrivePhase::Stopped(dwell);
                    }
                }
                DrivePhase::Cruise => {
                    if v > 0.5 * cfg.cruise_speed_mps
                        && rng.random_bool(cfg.stop_prob_per_s)
                        && remaining > 30.0
                    {
                        phase = DrivePhase::Braking;
                        v = (v - cfg.accel_limit_mps2).max(0.0);
                    } else {
                        let pull = 0.3 * (cfg.cruise_speed_mps - v);
                        let noise = rng.random_range(-0.8..=0.8);
                        let accel = (pull + noise)
                            .clamp(-cfg.accel_limit_mps2, cfg.accel_limit_mps2);
                        v = (v + accel).max(0.0);
                    }
                }
            }
        }
        // Engine-off gap before the next trip.
        clock = clock
            + Duration::seconds(duration as i64 + 1)
            + Duration::seconds(rng.random_range(1800..7200));
    }
    let log = TripLog::new(samples, &crate::trip::MonthMap::default())?;
    debug_assert_eq!(log.season(), season);
    Ok(log)
}

/// Ground truth for one simulated driver over one certified interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverScenario {
    pub truth: Hypothesis,
    pub x_u_kwh: f64,
    pub m_peop_kg: f64,
    pub w_aux_w: f64,
    pub season: Season,
}

impl DriverScenario {
    pub fn validate(&self, undeclared: &UndeclaredModel) -> Result<(), SimError> {
        match self.truth {
            Hypothesis::H0 => {
                if self.x_u_kwh != 0.0 {
                    return Err(SimError::InvalidScenario(format!(
                        "H0 requires x_u = 0, got {}",
                        self.x_u_kwh
                    )));
                }
            }
            Hypothesis::H1 => {
                if !(self.x_u_kwh > undeclared.x_u_min_kwh
                    && self.x_u_kwh <= undeclared.x_u_max_kwh)
                {
                    return Err(SimError::InvalidScenario(format!(
                        "H1 requires x_u in ({}, {}], got {}",
                        undeclared.x_u_min_kwh, undeclared.x_u_max_kwh, self.x_u_kwh
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Simulated observable for one trial: the true cumulative draw, the
/// differential SoC it implies, and a realizing SoC pair when one exists
/// within battery bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub x_c_kwh: f64,
    pub x_d_kwh: f64,
    pub soc: Option<SocPair>,
    pub feasible: bool,
}

/// Evaluates the conservation identity for a scenario on a fixed log. The
/// SoC pair starts from a full battery when discharging on net, or ends on
/// a full battery when net charging exceeded the draw; a trial whose `x_D`
/// cannot be realized inside `[0, e_max]` is flagged infeasible.
pub fn simulate_observation(
    scenario: &DriverScenario,
    log: &TripLog,
    params: &EvParams,
    consts: &PhysicsConstants,
) -> Result<Observation, SimError> {
    let x_c = cumulative_draw(log, scenario.m_peop_kg, scenario.w_aux_w, params, consts)?;
    let x_d = x_c - scenario.x_u_kwh;
    let feasible = x_d.abs() <= params.e_max_kwh;
    let soc = if feasible {
        let x0 = if x_d >= 0.0 {
            params.e_max_kwh
        } else {
            params.e_max_kwh + x_d
        };
        Some(SocPair::new(x0, x0 - x_d, params.e_max_kwh)?)
    } else {
        None
    };
    Ok(Observation {
        x_c_kwh: x_c,
        x_d_kwh: x_d,
        soc,
        feasible,
    })
}

/// 2x3 tally of (truth, ternary decision).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    counts: [[u64; 3]; 2],
}

fn truth_index(truth: Hypothesis) -> usize {
    match truth {
        Hypothesis::H0 => 0,
        Hypothesis::H1 => 1,
    }
}

fn decision_index(decision: Decision) -> usize {
    match decision {
        Decision::H0 => 0,
        Decision::H1 => 1,
        Decision::Erasure => 2,
    }
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: Hypothesis, decision: Decision) {
        self.counts[truth_index(truth)][decision_index(decision)] += 1;
    }

    pub fn count(&self, truth: Hypothesis, decision: Decision) -> u64 {
        self.counts[truth_index(truth)][decision_index(decision)]
    }

    pub fn row_total(&self, truth: Hypothesis) -> u64 {
        self.counts[truth_index(truth)].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.row_total(Hypothesis::H0) + self.row_total(Hypothesis::H1)
    }

    /// True-positive rate over non-erased `H1` trials.
    pub fn sensitivity(&self) -> Option<f64> {
        let tp = self.count(Hypothesis::H1, Decision::H1);
        let fnn = self.count(Hypothesis::H1, Decision::H0);
        if tp + fnn == 0 {
            None
        } else {
            Some(tp as f64 / (tp + fnn) as f64)
        }
    }

    /// True-negative rate over non-erased `H0` trials.
    pub fn specificity(&self) -> Option<f64> {
        let tn = self.count(Hypothesis::H0, Decision::H0);
        let fp = self.count(Hypothesis::H0, Decision::H1);
        if tn + fp == 0 {
            None
        } else {
            Some(tn as f64 / (tn + fp) as f64)
        }
    }

    pub fn erasure_rate(&self, truth: Hypothesis) -> Option<f64> {
        let total = self.row_total(truth);
        if total == 0 {
            None
        } else {
            Some(self.count(truth, Decision::Erasure) as f64 / total as f64)
        }
    }

    /// CSV with header `truth,decided_h0,decided_h1,decided_e`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("truth,decided_h0,decided_h1,decided_e\n");
        for (truth, label) in [(Hypothesis::H0, "h0"), (Hypothesis::H1, "h1")] {
            writeln!(
                out,
                "{label},{},{},{}",
                self.count(truth, Decision::H0),
                self.count(truth, Decision::H1),
                self.count(truth, Decision::Erasure)
            )
            .unwrap();
        }
        out
    }
}

/// Inputs of the Monte Carlo study.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub trials_per_season: usize,
    /// Bernoulli weight used to draw the ground-truth hypothesis.
    pub p1_sim: f64,
    /// Prior fed to the detector (independent of `p1_sim`).
    pub detector_p1: f64,
    /// Slab range for both simulation and detection; `None` max means the
    /// battery capacity.
    pub x_u_min_kwh: f64,
    pub x_u_max_kwh: Option<f64>,
    pub predictor_n: usize,
    pub bin_width_kwh: f64,
    pub thresholds: DecisionThresholds,
    pub trip: TripGenConfig,
    pub mass: MassModel,
    pub aux: AuxPowerModel,
    /// Misspecification knobs: the data-generating draws are scaled by
    /// these while the detector keeps the unscaled priors.
    pub true_mass_scale: f64,
    pub true_aux_scale: f64,
    pub master_seed: u64,
    pub seasons: Vec<Season>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            trials_per_season: 10_000,
            p1_sim: 0.5,
            detector_p1: 0.5,
            x_u_min_kwh: 0.0,
            x_u_max_kwh: None,
            predictor_n: 10_000,
            bin_width_kwh: 0.1,
            thresholds: DecisionThresholds::default(),
            trip: TripGenConfig::default(),
            mass: MassModel::default(),
            aux: AuxPowerModel::default(),
            true_mass_scale: 1.0,
            true_aux_scale: 1.0,
            master_seed: 0,
            seasons: vec![Season::Summer, Season::Winter],
        }
    }
}

impl StudyConfig {
    /// Parses a study configuration file; unset keys keep defaults.
    pub fn from_kv(kv: &KvMap) -> Result<Self, SimError> {
        let mut cfg = StudyConfig::default();
        cfg.trials_per_season = kv.get_usize("trials_per_season")?.unwrap_or(cfg.trials_per_season);
        cfg.p1_sim = kv.get_f64("p1_sim")?.unwrap_or(cfg.p1_sim);
        if let Some(p1) = kv.get_f64("p1")? {
            cfg.detector_p1 = p1;
        }
        cfg.detector_p1 = kv.get_f64("detector_p1")?.unwrap_or(cfg.detector_p1);
        cfg.x_u_min_kwh = kv.get_f64("x_u_min_kwh")?.unwrap_or(cfg.x_u_min_kwh);
        if let Some(max) = kv.get_f64("x_u_max_kwh")? {
            cfg.x_u_max_kwh = Some(max);
        }
        cfg.predictor_n = kv.get_usize("predictor_n")?.unwrap_or(cfg.predictor_n);
        cfg.bin_width_kwh = kv.get_f64("bin_width_kwh")?.unwrap_or(cfg.bin_width_kwh);
        let h0_max = kv.get_f64("h0_max")?.unwrap_or(cfg.thresholds.h0_max);
        let h1_min = kv.get_f64("h1_min")?.unwrap_or(cfg.thresholds.h1_min);
        cfg.thresholds = DecisionThresholds::new(h0_max, h1_min)?;
        cfg.trip.n_trips = kv.get_usize("n_trips")?.unwrap_or(cfg.trip.n_trips);
        cfg.trip.mean_trip_duration_s = kv
            .get_u64("mean_trip_duration_s")?
            .map(|v| v as u32)
            .unwrap_or(cfg.trip.mean_trip_duration_s);
        cfg.trip.cruise_speed_mps =
            kv.get_f64("cruise_speed_mps")?.unwrap_or(cfg.trip.cruise_speed_mps);
        cfg.trip.accel_limit_mps2 =
            kv.get_f64("accel_limit_mps2")?.unwrap_or(cfg.trip.accel_limit_mps2);
        cfg.trip.stop_prob_per_s =
            kv.get_f64("stop_prob_per_s")?.unwrap_or(cfg.trip.stop_prob_per_s);
        cfg.trip.max_grade = kv.get_f64("max_grade")?.unwrap_or(cfg.trip.max_grade);
        cfg.trip.grade_smoothness =
            kv.get_f64("grade_smoothness")?.unwrap_or(cfg.trip.grade_smoothness);
        apply_model_overrides(kv, &mut cfg.mass, &mut cfg.aux)?;
        cfg.true_mass_scale = kv.get_f64("true_mass_scale")?.unwrap_or(cfg.true_mass_scale);
        cfg.true_aux_scale = kv.get_f64("true_aux_scale")?.unwrap_or(cfg.true_aux_scale);
        cfg.master_seed = kv.get_u64("master_seed")?.unwrap_or(cfg.master_seed);
        if let Some(raw) = kv.get("seasons") {
            let parsed: Result<Vec<Season>, _> =
                raw.split(',').map(|s| s.trim().parse::<Season>()).collect();
            cfg.seasons = parsed.map_err(SimError::InvalidStudyConfig)?;
        }
        cfg.trip.seed = cfg.master_seed;
        Ok(cfg)
    }

    pub fn validate(&self, params: &EvParams) -> Result<(), SimError> {
        if self.trials_per_season == 0 {
            return Err(SimError::InvalidStudyConfig("trials_per_season must be >= 1".into()));
        }
        if self.predictor_n == 0 {
            return Err(SimError::InvalidStudyConfig("predictor_n must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p1_sim) {
            return Err(SimError::InvalidStudyConfig(format!(
                "p1_sim must lie in [0, 1], got {}",
                self.p1_sim
            )));
        }
        let max = self.x_u_max_effective(params);
        if max > params.e_max_kwh + 1e-9 {
            return Err(SimError::InvalidStudyConfig(format!(
                "x_u_max_kwh {max} exceeds the battery capacity {}",
                params.e_max_kwh
            )));
        }
        self.trip.validate()?;
        if self.seasons.is_empty() {
            return Err(SimError::InvalidStudyConfig("no seasons selected".into()));
        }
        Ok(())
    }

    pub fn x_u_max_effective(&self, params: &EvParams) -> f64 {
        self.x_u_max_kwh.unwrap_or(params.e_max_kwh)
    }
}

/// Outcome of the study for one season.
#[derive(Debug, Clone)]
pub struct StudyReport {
    pub season: Season,
    pub trials: usize,
    pub infeasible: u64,
    pub confusion: ConfusionMatrix,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub erasure_rate_h0: Option<f64>,
    pub erasure_rate_h1: Option<f64>,
    /// Posterior of every tallied trial, split by ground truth.
    pub posteriors_h0: Vec<f64>,
    pub posteriors_h1: Vec<f64>,
    pub xc_stats: crate::predictor::DistStats,
}

impl StudyReport {
    /// Empirical quantile (by sorted order) of the posteriors under the
    /// given truth class.
    pub fn posterior_quantile(&self, truth: Hypothesis, q: f64) -> Option<f64> {
        let set = match truth {
            Hypothesis::H0 => &self.posteriors_h0,
            Hypothesis::H1 => &self.posteriors_h1,
        };
        if set.is_empty() {
            return None;
        }
        let mut sorted = set.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("posteriors are finite"));
        let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
        Some(sorted[idx.min(sorted.len() - 1)])
    }

    /// Histogram of posteriors for one truth class as
    /// `(bin_left, bin_right, probability)` rows over `[0, 1]`.
    pub fn posterior_histogram(&self, truth: Hypothesis, bins: usize) -> Vec<(f64, f64, f64)> {
        let set = match truth {
            Hypothesis::H0 => &self.posteriors_h0,
            Hypothesis::H1 => &self.posteriors_h1,
        };
        let mut counts = vec![0u64; bins];
        for &p in set {
            let i = ((p * bins as f64) as usize).min(bins - 1);
            counts[i] += 1;
        }
        let total = set.len().max(1) as f64;
        counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                (
                    i as f64 / bins as f64,
                    (i + 1) as f64 / bins as f64,
                    c as f64 / total,
                )
            })
            .collect()
    }

    /// Human-readable study summary.
    pub fn render_summary(&self) -> String {
        let mut s = String::new();
        let pct = |v: Option<f64>| match v {
            Some(x) => format!("{:.2}%", 100.0 * x),
            None => "n/a".to_string(),
        };
        writeln!(s, "season: {}", self.season).unwrap();
        writeln!(s, "trials: {} (infeasible excluded: {})", self.trials, self.infeasible).unwrap();
        writeln!(
            s,
            "predicted draw: mean {:.3} kWh, sd {:.3} kWh, mode {:.3} kWh",
            self.xc_stats.mean_kwh,
            self.xc_stats.variance_kwh2.sqrt(),
            self.xc_stats.mode_kwh
        )
        .unwrap();
        writeln!(s, "confusion (rows: truth h0/h1; cols: decided h0/h1/e):").unwrap();
        for truth in [Hypothesis::H0, Hypothesis::H1] {
            writeln!(
                s,
                "  {truth}: {:6} {:6} {:6}",
                self.confusion.count(truth, Decision::H0),
                self.confusion.count(truth, Decision::H1),
                self.confusion.count(truth, Decision::Erasure)
            )
            .unwrap();
        }
        writeln!(s, "sensitivity (non-erased): {}", pct(self.sensitivity)).unwrap();
        writeln!(s, "specificity (non-erased): {}", pct(self.specificity)).unwrap();
        writeln!(s, "erasure rate under h0: {}", pct(self.erasure_rate_h0)).unwrap();
        writeln!(s, "erasure rate under h1: {}", pct(self.erasure_rate_h1)).unwrap();
        s
    }
}

fn season_tag(season: Season) -> u64 {
    match season {
        Season::Summer => 0,
        Season::Winter => 1,
    }
}

/// Runs the Monte Carlo study: one fixed trip log and predictor per season,
/// then `trials_per_season` independent simulated drivers classified by the
/// detector. Fully deterministic in the master seed; trials derive
/// per-index seeds, so tallies are invariant to work partitioning.
pub fn run_mc_study(
    cfg: &StudyConfig,
    params: &EvParams,
    consts: &PhysicsConstants,
) -> Result<Vec<StudyReport>, SimError> {
    cfg.validate(params)?;
    let x_u_max = cfg.x_u_max_effective(params);
    let mut reports = Vec::new();

    for &season in &cfg.seasons {
        let tag = season_tag(season);
        let mut log_rng = seeds::rng(cfg.master_seed, Domain::TripGen, tag);
        let log = generate_trip_log(&cfg.trip, season, &mut log_rng)?;
        // Predictor seeds must differ per season; fold the season into the
        // master seed for the per-sample substreams.
        let predictor_seed = seeds::derive(cfg.master_seed, Domain::Predictor, tag);
        let xc = predict_xc(
            &log,
            params,
            consts,
            season,
            &cfg.mass,
            &cfg.aux,
            cfg.predictor_n,
            cfg.bin_width_kwh,
            predictor_seed,
        )?;
        let xc_stats = xc.stats();
        let undeclared = UndeclaredModel::new(cfg.detector_p1, cfg.x_u_min_kwh, x_u_max)?;
        let detector = Detector::new(xc, &undeclared, cfg.thresholds)?;

        let mut confusion = ConfusionMatrix::default();
        let mut infeasible = 0u64;
        let mut posteriors_h0 = Vec::new();
        let mut posteriors_h1 = Vec::new();

        for trial in 0..cfg.trials_per_season {
            let index = (tag << 48) | trial as u64;
            let mut rng = seeds::rng(cfg.master_seed, Domain::StudyTrial, index);
            let truth = if rng.random::<f64>() < cfg.p1_sim {
                Hypothesis::H1
            } else {
                Hypothesis::H0
            };
            let x_u = undeclared.sample(truth, &mut rng);
            let m_peop = cfg.mass.sample(&mut rng) * cfg.true_mass_scale;
            let w_aux = cfg.aux.sample(season, &mut rng) * cfg.true_aux_scale;
            let scenario = DriverScenario {
                truth,
                x_u_kwh: x_u,
                m_peop_kg: m_peop,
                w_aux_w: w_aux,
                season,
            };
            let obs = simulate_observation(&scenario, &log, params, consts)?;
            if !obs.feasible {
                infeasible += 1;
                continue;
            }
            let out = detector.classify(obs.x_d_kwh);
            confusion.record(truth, out.decision);
            match truth {
                Hypothesis::H0 => posteriors_h0.push(out.posterior_h1),
                Hypothesis::H1 => posteriors_h1.push(out.posterior_h1),
            }
        }

        reports.push(StudyReport {
            season,
            trials: cfg.trials_per_season,
            infeasible,
            sensitivity: confusion.sensitivity(),
            specificity: confusion.specificity(),
            erasure_rate_h0: confusion.erasure_rate(Hypothesis::H0),
            erasure_rate_h1: confusion.erasure_rate(Hypothesis::H1),
            confusion,
            posteriors_h0,
            posteriors_h1,
            xc_stats,
        });
    }
    Ok(reports)
}

/// Inputs for a fixed-undeclared-energy scenario sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Ground-truth undeclared energy held fixed across observations.
    pub x_u_kwh: f64,
    pub n_observations: usize,
    pub season: Season,
    pub detector_p1: f64,
    pub x_u_min_kwh: f64,
    pub x_u_max_kwh: Option<f64>,
    pub predictor_n: usize,
    pub bin_width_kwh: f64,
    pub thresholds: DecisionThresholds,
    pub trip: TripGenConfig,
    pub mass: MassModel,
    pub aux: AuxPowerModel,
    pub master_seed: u64,
}

impl SweepConfig {
    pub fn new(x_u_kwh: f64, season: Season) -> Self {
        SweepConfig {
            x_u_kwh,
            n_observations: 10_000,
            season,
            detector_p1: 0.5,
            x_u_min_kwh: 0.0,
            x_u_max_kwh: None,
            predictor_n: 10_000,
            bin_width_kwh: 0.1,
            thresholds: DecisionThresholds::default(),
            trip: TripGenConfig::default(),
            mass: MassModel::default(),
            aux: AuxPowerModel::default(),
            master_seed: 0,
        }
    }
}

/// One point of the posterior-versus-`x_D` curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub bin: i64,
    pub x_d_left_kwh: f64,
    pub posterior: f64,
}

/// Output of a scenario sweep: the predictive distribution, the detector
/// curve over its support, the empirical `x_D` histogram under the fixed
/// undeclared energy, and each observation's posterior.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub xc: EmpiricalDist,
    pub curve: Vec<SweepPoint>,
    pub xd_hist: EmpiricalDist,
    pub obs_posteriors: Vec<f64>,
}

/// Simulates `n_observations` drivers with the fixed undeclared energy on
/// one log, classifies each, and evaluates the posterior curve over the
/// whole `x_D` support.
pub fn scenario_sweep(
    cfg: &SweepConfig,
    params: &EvParams,
    consts: &PhysicsConstants,
) -> Result<SweepResult, SimError> {
    let x_u_max = cfg.x_u_max_kwh.unwrap_or(params.e_max_kwh);
    if cfg.x_u_kwh < 0.0 || cfg.x_u_kwh > x_u_max {
        return Err(SimError::InvalidScenario(format!(
            "fixed x_u {} outside [0, {x_u_max}]",
            cfg.x_u_kwh
        )));
    }
    if cfg.n_observations == 0 {
        return Err(SimError::InvalidStudyConfig("n_observations must be >= 1".into()));
    }
    let tag = season_tag(cfg.season);
    let mut log_rng = seeds::rng(cfg.master_seed, Domain::TripGen, tag);
    let log = generate_trip_log(&cfg.trip, cfg.season, &mut log_rng)?;
    let predictor_seed = seeds::derive(cfg.master_seed, Domain::Predictor, tag);
    let xc = predict_xc(
        &log,
        params,
        consts,
        cfg.season,
        &cfg.mass,
        &cfg.aux,
        cfg.predictor_n,
        cfg.bin_width_kwh,
        predictor_seed,
    )?;
    let undeclared = UndeclaredModel::new(cfg.detector_p1, cfg.x_u_min_kwh, x_u_max)?;
    let detector = Detector::new(xc.clone(), &undeclared, cfg.thresholds)?;

    let mut xd_values = Vec::with_capacity(cfg.n_observations);
    let mut obs_posteriors = Vec::with_capacity(cfg.n_observations);
    for i in 0..cfg.n_observations {
        let index = (tag << 48) | i as u64;
        let mut rng = seeds::rng(cfg.master_seed, Domain::SweepObservation, index);
        let m_peop = cfg.mass.sample(&mut rng);
        let w_aux = cfg.aux.sample(cfg.season, &mut rng);
        let x_c = cumulative_draw(&log, m_peop, w_aux, params, consts)?;
        let x_d = x_c - cfg.x_u_kwh;
        xd_values.push(x_d);
        obs_posteriors.push(detector.classify(x_d).posterior_h1);
    }
    let xd_hist = EmpiricalDist::from_samples(&xd_values, cfg.bin_width_kwh)?;
    let curve = detector
        .posterior_curve()
        .into_iter()
        .map(|(bin, out)| SweepPoint {
            bin,
            x_d_left_kwh: detector.xc().left_edge_kwh(bin),
            posterior: out.posterior_h1,
        })
        .collect();
    Ok(SweepResult {
        xc,
        curve,
        xd_hist,
        obs_posteriors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn kia() -> EvParams {
        EvParams::kia_soul_ev_2020()
    }

    fn consts() -> PhysicsConstants {
        PhysicsConstants::default()
    }

    #[test]
    fn generator_size_contract() {
        let cfg = TripGenConfig {
            n_trips: 1,
            mean_trip_duration_s: 10,
            ..TripGenConfig::default()
        };
        let mut rng = seeds::rng(1, Domain::TripGen, 0);
        let log = generate_trip_log(&cfg, Season::Summer, &mut rng).unwrap();
        assert_eq!(log.trip_count(), 1);
        assert_eq!(log.samples().len(), 11);
    }

    #[test]
    fn generator_hits_calibrated_distance() {
        // Cruise 8 m/s for 1000 s over 40 trips is nominally 320 km; stops
        // and ramps may shave off up to 20%.
        let cfg = TripGenConfig {
            n_trips: 40,
            mean_trip_duration_s: 1000,
            cruise_speed_mps: 8.0,
            ..TripGenConfig::default()
        };
        let mut rng = seeds::rng(5, Domain::TripGen, 0);
        let log = generate_trip_log(&cfg, Season::Summer, &mut rng).unwrap();
        let km = log.total_distance_m() / 1000.0;
        assert!((256.0..=384.0).contains(&km), "total distance {km} km");
    }

    #[test]
    fn generator_respects_per_trip_distance_band() {
        let cfg = TripGenConfig::default();
        let mut rng = seeds::rng(17, Domain::TripGen, 0);
        let log = generate_trip_log(&cfg, Season::Winter, &mut rng).unwrap();
        let nominal = cfg.cruise_speed_mps * cfg.mean_trip_duration_s as f64;
        for trip in log.trips() {
            let dist: f64 = trip[..trip.len() - 1].iter().map(|s| s.speed_mps).sum();
            assert!(
                dist >= 0.5 * nominal && dist <= 1.5 * nominal,
                "trip distance {dist} outside +-50% of {nominal}"
            );
        }
    }

    #[test]
    fn generator_is_seed_deterministic() {
        let cfg = TripGenConfig::default();
        let a = generate_trip_log(&cfg, Season::Summer, &mut seeds::rng(9, Domain::TripGen, 0))
            .unwrap();
        let b = generate_trip_log(&cfg, Season::Summer, &mut seeds::rng(9, Domain::TripGen, 0))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn generated_seasons_round_trip() {
        let cfg = TripGenConfig {
            n_trips: 2,
            mean_trip_duration_s: 20,
            ..TripGenConfig::default()
        };
        for season in [Season::Summer, Season::Winter] {
            let log =
                generate_trip_log(&cfg, season, &mut seeds::rng(3, Domain::TripGen, 7)).unwrap();
            assert_eq!(log.season(), season);
        }
    }

    #[test]
    fn observation_conservation_identity() {
        let cfg = TripGenConfig {
            n_trips: 4,
            mean_trip_duration_s: 120,
            ..TripGenConfig::default()
        };
        let log =
            generate_trip_log(&cfg, Season::Summer, &mut seeds::rng(2, Domain::TripGen, 0)).unwrap();

        // H0: x_d equals the cumulative draw exactly.
        let h0 = DriverScenario {
            truth: Hypothesis::H0,
            x_u_kwh: 0.0,
            m_peop_kg: 90.0,
            w_aux_w: 700.0,
            season: Season::Summer,
        };
        let obs = simulate_observation(&h0, &log, &kia(), &consts()).unwrap();
        assert_eq!(obs.x_d_kwh, obs.x_c_kwh);
        let soc = obs.soc.unwrap();
        assert_relative_eq!(soc.xd_kwh(), obs.x_d_kwh, max_relative = 1e-12);

        // Large undeclared charge: x_d can go negative, still feasible, and
        // conservation holds to machine precision.
        let h1 = DriverScenario {
            truth: Hypothesis::H1,
            x_u_kwh: 0.5 * kia().e_max_kwh,
            m_peop_kg: 90.0,
            w_aux_w: 700.0,
            season: Season::Summer,
        };
        let obs = simulate_observation(&h1, &log, &kia(), &consts()).unwrap();
        assert!(obs.x_d_kwh < 0.0);
        assert!(obs.feasible);
        assert_relative_eq!(obs.x_d_kwh + h1.x_u_kwh, obs.x_c_kwh, max_relative = 1e-15);
        let soc = obs.soc.unwrap();
        assert!(soc.x0_kwh >= 0.0 && soc.x1_kwh <= kia().e_max_kwh);
        assert_relative_eq!(soc.xd_kwh(), obs.x_d_kwh, max_relative = 1e-9);
    }

    #[test]
    fn scenario_validation() {
        let und = UndeclaredModel::new(0.5, 0.0, 35.0).unwrap();
        let bad_h0 = DriverScenario {
            truth: Hypothesis::H0,
            x_u_kwh: 1.0,
            m_peop_kg: 74.0,
            w_aux_w: 0.0,
            season: Season::Summer,
        };
        assert!(bad_h0.validate(&und).is_err());
        let bad_h1 = DriverScenario {
            truth: Hypothesis::H1,
            x_u_kwh: 40.0,
            ..bad_h0
        };
        assert!(bad_h1.validate(&und).is_err());
    }

    #[test]
    fn confusion_matrix_accounting() {
        let mut cm = ConfusionMatrix::default();
        for _ in 0..3 {
            cm.record(Hypothesis::H0, Decision::H0);
        }
        cm.record(Hypothesis::H0, Decision::Erasure);
        cm.record(Hypothesis::H1, Decision::H1);
        cm.record(Hypothesis::H1, Decision::H0);
        assert_eq!(cm.row_total(Hypothesis::H0), 4);
        assert_eq!(cm.row_total(Hypothesis::H1), 2);
        assert_eq!(cm.specificity(), Some(1.0));
        assert_eq!(cm.sensitivity(), Some(0.5));
        assert_eq!(cm.erasure_rate(Hypothesis::H0), Some(0.25));
        let csv = cm.to_csv_string();
        assert!(csv.starts_with("truth,decided_h0,decided_h1,decided_e\n"));
        assert!(csv.contains("h0,3,0,1"));
        assert!(csv.contains("h1,1,1,0"));
    }

    #[test]
    fn small_study_tallies_every_trial() {
        let cfg = StudyConfig {
            trials_per_season: 200,
            predictor_n: 1_500,
            trip: TripGenConfig {
                n_trips: 6,
                mean_trip_duration_s: 100,
                ..TripGenConfig::default()
            },
            master_seed: 42,
            ..StudyConfig::default()
        };
        let reports = run_mc_study(&cfg, &kia(), &consts()).unwrap();
        assert_eq!(reports.len(), 2);
        for r in &reports {
            assert_eq!(r.confusion.total() + r.infeasible, 200);
            // Bayes under the generating model separates the classes on
            // average.
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
            assert!(mean(&r.posteriors_h1) > mean(&r.posteriors_h0));
        }
    }

    #[test]
    fn study_is_deterministic() {
        let cfg = StudyConfig {
            trials_per_season: 60,
            predictor_n: 400,
            trip: TripGenConfig {
                n_trips: 3,
                mean_trip_duration_s: 80,
                ..TripGenConfig::default()
            },
            seasons: vec![Season::Winter],
            master_seed: 77,
            ..StudyConfig::default()
        };
        let a = run_mc_study(&cfg, &kia(), &consts()).unwrap();
        let b = run_mc_study(&cfg, &kia(), &consts()).unwrap();
        assert_eq!(a[0].confusion, b[0].confusion);
        assert_eq!(a[0].posteriors_h0, b[0].posteriors_h0);
        assert_eq!(a[0].posteriors_h1, b[0].posteriors_h1);
    }

    #[test]
    fn sweep_shift_identity() {
        // The x_d histogram under a fixed x_u is the x_u = 0 histogram
        // shifted down by x_u, bin-exactly, when x_u is a grid multiple.
        let mut base = SweepConfig::new(0.0, Season::Summer);
        base.n_observations = 2_000;
        base.predictor_n = 500;
        base.trip = TripGenConfig {
            n_trips: 5,
            mean_trip_duration_s: 100,
            ..TripGenConfig::default()
        };
        base.master_seed = 11;
        let zero = scenario_sweep(&base, &kia(), &consts()).unwrap();

        let mut shifted_cfg = base.clone();
        shifted_cfg.x_u_kwh = 2.5; // 25 bins on the 0.1 kWh grid
        let shifted = scenario_sweep(&shifted_cfg, &kia(), &consts()).unwrap();

        assert_eq!(shifted.xd_hist.min_bin(), zero.xd_hist.min_bin() - 25);
        assert_eq!(shifted.xd_hist.max_bin(), zero.xd_hist.max_bin() - 25);
        for b in zero.xd_hist.min_bin()..=zero.xd_hist.max_bin() {
            assert_eq!(shifted.xd_hist.mass_at(b - 25), zero.xd_hist.mass_at(b));
        }
    }

    #[test]
    fn study_config_file_round_trip() {
        let kv = KvMap::parse(
            "trials_per_season = 500\nmaster_seed = 33\nn_trips = 12\n\
             mean_trip_duration_s = 90\nx_u_min_kwh = 7\nseasons = winter\n\
             winter_scale = 750\np1 = 0.4\n",
        )
        .unwrap();
        let cfg = StudyConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.trials_per_season, 500);
        assert_eq!(cfg.master_seed, 33);
        assert_eq!(cfg.trip.n_trips, 12);
        assert_eq!(cfg.trip.mean_trip_duration_s, 90);
        assert_eq!(cfg.x_u_min_kwh, 7.0);
        assert_eq!(cfg.detector_p1, 0.4);
        assert_eq!(cfg.seasons, vec![Season::Winter]);
        assert_eq!(cfg.aux.params_for(Season::Winter).scale, 750.0);
        assert!(cfg.validate(&kia()).is_ok());

        let bad = KvMap::parse("x_u_max_kwh = 99\n").unwrap();
        let cfg = StudyConfig::from_kv(&bad).unwrap();
        assert!(cfg.validate(&kia()).is_err());
    }
}
