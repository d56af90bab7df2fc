//! Monte Carlo predictive distribution of the cumulative battery draw.
//!
//! `predict_xc` draws n iid pairs (passenger mass, auxiliary power) from
//! their priors, evaluates the deterministic energy model for each, and
//! uniformly bins the resulting draws. One pair covers the whole multi-trip
//! interval, matching the per-interval averaging of the priors.
//!
//! Histograms live on an absolute bin grid anchored at 0 kWh: bin `k`
//! covers `[k*w, (k+1)*w)`, with `k` possibly negative. Anchoring makes
//! distributions with a shared bin width directly comparable, which the
//! detector relies on.
//!
//! Each Monte Carlo sample uses its own RNG derived from (master seed,
//! sample index), so the resulting histogram is independent of how samples
//! are partitioned across workers.

use std::io::Write;

use thiserror::Error;

use crate::models::{AuxPowerModel, MassModel};
use crate::physics::{cumulative_draw, EvParams, PhysicsConstants, PhysicsError};
use crate::seeds::{self, Domain};
use crate::trip::{Season, TripLog};

#[derive(Debug, Error)]
pub enum DistError {
    #[error("sample count must be at least 1")]
    NoSamples,
    #[error("bin width must be positive and finite, got {0}")]
    InvalidBinWidth(f64),
    #[error("sample {index} is not finite: {value}")]
    NonFiniteSample { index: usize, value: f64 },
    #[error("bin masses must be nonnegative and finite")]
    InvalidMass,
    #[error("bin masses must carry positive total mass")]
    ZeroTotalMass,
    #[error("bin grids do not match: width {left} vs {right}")]
    GridMismatch { left: f64, right: f64 },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("CSV output: {0}")]
    Io(#[from] std::io::Error),
}

/// Absolute bin index of `x` on the grid with width `w` anchored at 0.
pub fn bin_index(x: f64, w: f64) -> i64 {
    (x / w).floor() as i64
}

/// Binned probability mass over an energy axis.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDist {
    bin_width_kwh: f64,
    /// Absolute grid index of `masses[0]`.
    first_bin: i64,
    /// Normalized masses; the first and last entries are nonzero.
    masses: Vec<f64>,
    sample_count: usize,
}

/// Summary statistics of an [`EmpiricalDist`], moments taken over bin
/// centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistStats {
    pub mean_kwh: f64,
    pub variance_kwh2: f64,
    /// Highest-mass bin; ties resolve to the lowest bin index.
    pub mode_bin: i64,
    /// Center of the mode bin.
    pub mode_kwh: f64,
    pub min_bin: i64,
    pub max_bin: i64,
}

impl EmpiricalDist {
    /// Bins raw samples on the absolute grid.
    pub fn from_samples(samples: &[f64], bin_width_kwh: f64) -> Result<Self, DistError> {
        if samples.is_empty() {
            return Err(DistError::NoSamples);
        }
        if !(bin_width_kwh.is_finite() && bin_width_kwh > 0.0) {
            return Err(DistError::InvalidBinWidth(bin_width_kwh));
        }
        for (index, &value) in samples.iter().enumerate() {
            if !value.is_finite() {
                return Err(DistError::NonFiniteSample { index, value });
            }
        }
        let bins: Vec<i64> = samples.iter().map(|&x| bin_index(x, bin_width_kwh)).collect();
        let first_bin = *bins.iter().min().expect("nonempty");
        let last_bin = *bins.iter().max().expect("nonempty");
        let mut masses = vec![0.0; (last_bin - first_bin + 1) as usize];
        let weight = 1.0 / samples.len() as f64;
        for b in bins {
            masses[(b - first_bin) as usize] += weight;
        }
        Self::from_masses(first_bin, masses, bin_width_kwh, samples.len())
    }

    /// Builds a distribution from raw bin masses; trims zero ends and
    /// normalizes to total mass 1.
    pub fn from_masses(
        first_bin: i64,
        masses: Vec<f64>,
        bin_width_kwh: f64,
        sample_count: usize,
    ) -> Result<Self, DistError> {
        if !(bin_width_kwh.is_finite() && bin_width_kwh > 0.0) {
            return Err(DistError::InvalidBinWidth(bin_width_kwh));
        }
        if masses.iter().any(|&m| !m.is_finite() || m < 0.0) {
            return Err(DistError::InvalidMass);
        }
        let lead = masses.iter().take_while(|&&m| m == 0.0).count();
        let trail = masses.iter().rev().take_while(|&&m| m == 0.0).count();
        if lead + trail >= masses.len() {
            return Err(DistError::ZeroTotalMass);
        }
        let mut trimmed: Vec<f64> = masses[lead..masses.len() - trail].to_vec();
        let total: f64 = trimmed.iter().sum();
        if total <= 0.0 {
            return Err(DistError::ZeroTotalMass);
        }
        for m in &mut trimmed {
            *m /= total;
        }
        Ok(EmpiricalDist {
            bin_width_kwh,
            first_bin: first_bin + lead as i64,
            masses: trimmed,
            sample_count,
        })
    }

    pub fn bin_width_kwh(&self) -> f64 {
        self.bin_width_kwh
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    /// Lowest occupied bin.
    pub fn min_bin(&self) -> i64 {
        self.first_bin
    }

    /// Highest occupied bin.
    pub fn max_bin(&self) -> i64 {
        self.first_bin + self.masses.len() as i64 - 1
    }

    /// Mass at an absolute bin index (zero outside the stored range).
    pub fn mass_at(&self, bin: i64) -> f64 {
        if bin < self.first_bin {
            return 0.0;
        }
        let offset = (bin - self.first_bin) as usize;
        self.masses.get(offset).copied().unwrap_or(0.0)
    }

    /// Bin index of a value on this distribution's grid.
    pub fn bin_of(&self, x_kwh: f64) -> i64 {
        bin_index(x_kwh, self.bin_width_kwh)
    }

    pub fn left_edge_kwh(&self, bin: i64) -> f64 {
        bin as f64 * self.bin_width_kwh
    }

    pub fn center_kwh(&self, bin: i64) -> f64 {
        (bin as f64 + 0.5) * self.bin_width_kwh
    }

    /// Left edge of the lowest occupied bin.
    pub fn origin_kwh(&self) -> f64 {
        self.left_edge_kwh(self.first_bin)
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn stats(&self) -> DistStats {
        let mut mean = 0.0;
        for (i, &m) in self.masses.iter().enumerate() {
            mean += m * self.center_kwh(self.first_bin + i as i64);
        }
        let mut variance = 0.0;
        let mut mode_offset = 0usize;
        for (i, &m) in self.masses.iter().enumerate() {
            let c = self.center_kwh(self.first_bin + i as i64);
            variance += m * (c - mean) * (c - mean);
            if m > self.masses[mode_offset] {
                mode_offset = i;
            }
        }
        let mode_bin = self.first_bin + mode_offset as i64;
        DistStats {
            mean_kwh: mean,
            variance_kwh2: variance,
            mode_bin,
            mode_kwh: self.center_kwh(mode_bin),
            min_bin: self.min_bin(),
            max_bin: self.max_bin(),
        }
    }

    /// Total-variation distance to another distribution on the same grid.
    pub fn tv_distance(&self, other: &EmpiricalDist) -> Result<f64, DistError> {
        self.check_same_grid(other)?;
        let lo = self.min_bin().min(other.min_bin());
        let hi = self.max_bin().max(other.max_bin());
        let mut tv = 0.0;
        for b in lo..=hi {
            tv += (self.mass_at(b) - other.mass_at(b)).abs();
        }
        Ok(tv / 2.0)
    }

    pub fn check_same_grid(&self, other: &EmpiricalDist) -> Result<(), DistError> {
        if self.bin_width_kwh != other.bin_width_kwh {
            return Err(DistError::GridMismatch {
                left: self.bin_width_kwh,
                right: other.bin_width_kwh,
            });
        }
        Ok(())
    }

    /// Histogram CSV: `bin_left_kwh,bin_right_kwh,probability`, one row per
    /// bin, probabilities with 15 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<(), DistError> {
        writeln!(w, "bin_left_kwh,bin_right_kwh,probability")?;
        for (i, &m) in self.masses.iter().enumerate() {
            let bin = self.first_bin + i as i64;
            writeln!(
                w,
                "{:.6},{:.6},{:.15e}",
                self.left_edge_kwh(bin),
                self.left_edge_kwh(bin + 1),
                m
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

/// One predictive sample of the cumulative draw (kWh) for sample `index`
/// under the master seed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn xc_sample(
    log: &TripLog,
    params: &EvParams,
    consts: &PhysicsConstants,
    season: Season,
    mass_model: &MassModel,
    aux_model: &AuxPowerModel,
    master_seed: u64,
    index: u64,
) -> Result<f64, PhysicsError> {
    let mut rng = seeds::rng(master_seed, Domain::Predictor, index);
    let m_peop = mass_model.sample(&mut rng);
    let w_aux = aux_model.sample(season, &mut rng);
    cumulative_draw(log, m_peop, w_aux, params, consts)
}

/// Monte Carlo predictive distribution of the cumulative battery draw over
/// the interval, from `n` iid (mass, auxiliary power) draws.
#[allow(clippy::too_many_arguments)]
pub fn predict_xc(
    log: &TripLog,
    params: &EvParams,
    consts: &PhysicsConstants,
    season: Season,
    mass_model: &MassModel,
    aux_model: &AuxPowerModel,
    n: usize,
    bin_width_kwh: f64,
    master_seed: u64,
) -> Result<EmpiricalDist, DistError> {
    if n == 0 {
        return Err(DistError::NoSamples);
    }
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        samples.push(xc_sample(
            log,
            params,
            consts,
            season,
            mass_model,
            aux_model,
            master_seed,
            i as u64,
        )?);
    }
    EmpiricalDist::from_samples(&samples, bin_width_kwh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{gamma_from_moments, AuxPowerModel, MassModel};
    use crate::trip::tests::uniform_log;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn kia() -> EvParams {
        EvParams::kia_soul_ev_2020()
    }

    fn consts() -> PhysicsConstants {
        PhysicsConstants::default()
    }

    #[test]
    fn single_sample_gives_point_mass() {
        let log = uniform_log(2, 60, 10.0, 0.0);
        let d = predict_xc(
            &log,
            &kia(),
            &consts(),
            Season::Summer,
            &MassModel::default(),
            &AuxPowerModel::default(),
            1,
            0.1,
            7,
        )
        .unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.masses(), &[1.0]);
        assert_eq!(d.sample_count(), 1);
    }

    #[test]
    fn zero_samples_is_an_error() {
        let log = uniform_log(1, 10, 5.0, 0.0);
        let err = predict_xc(
            &log,
            &kia(),
            &consts(),
            Season::Summer,
            &MassModel::default(),
            &AuxPowerModel::default(),
            0,
            0.1,
            7,
        )
        .unwrap_err();
        assert!(matches!(err, DistError::NoSamples));
    }

    #[test]
    fn degenerate_priors_collapse_to_one_bin() {
        // Point-mass occupancy, zero mass spread, and a near-constant
        // auxiliary draw: every sample lands in the deterministic bin.
        let log = uniform_log(3, 120, 9.0, 0.0);
        let mass = MassModel::new([1.0, 0.0, 0.0, 0.0, 0.0], 74.0, 0.0).unwrap();
        let tight = gamma_from_moments(800.0, 1e-6).unwrap();
        let aux = AuxPowerModel::new(tight, tight).unwrap();
        let d = predict_xc(
            &log, &kia(), &consts(), Season::Summer, &mass, &aux, 2_000, 0.1, 3,
        )
        .unwrap();
        assert_eq!(d.len(), 1, "distribution spread over {} bins", d.len());
        let expected =
            cumulative_draw(&log, 74.0, 800.0, &kia(), &consts()).unwrap();
        assert_eq!(d.min_bin(), bin_index(expected, 0.1));
    }

    #[test]
    fn winter_spreads_wider_than_summer() {
        let log = uniform_log(40, 150, 9.0, 0.0);
        let run = |season| {
            predict_xc(
                &log,
                &kia(),
                &consts(),
                season,
                &MassModel::default(),
                &AuxPowerModel::default(),
                4_000,
                0.1,
                11,
            )
            .unwrap()
        };
        let summer = run(Season::Summer);
        let winter = run(Season::Winter);
        assert!(
            winter.stats().variance_kwh2 > summer.stats().variance_kwh2,
            "winter {} <= summer {}",
            winter.stats().variance_kwh2,
            summer.stats().variance_kwh2
        );
    }

    #[test]
    fn masses_are_normalized() {
        let log = uniform_log(4, 80, 8.0, 0.0);
        let d = predict_xc(
            &log,
            &kia(),
            &consts(),
            Season::Winter,
            &MassModel::default(),
            &AuxPowerModel::default(),
            5_000,
            0.1,
            13,
        )
        .unwrap();
        assert_abs_diff_eq!(d.total_mass(), 1.0, epsilon = 1e-9);
        assert!(d.masses().first().copied().unwrap() > 0.0);
        assert!(d.masses().last().copied().unwrap() > 0.0);
    }

    #[test]
    fn seeded_runs_are_bit_identical_and_partition_invariant() {
        let log = uniform_log(2, 100, 10.0, 0.0);
        let run = || {
            predict_xc(
                &log,
                &kia(),
                &consts(),
                Season::Winter,
                &MassModel::default(),
                &AuxPowerModel::default(),
                800,
                0.1,
                17,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);

        // Partitioned evaluation: per-index seeds make any split reproduce
        // the single pass exactly.
        let mut merged = Vec::new();
        for range in [0..300usize, 300..800] {
            for i in range {
                merged.push(
                    xc_sample(
                        &log,
                        &kia(),
                        &consts(),
                        Season::Winter,
                        &MassModel::default(),
                        &AuxPowerModel::default(),
                        17,
                        i as u64,
                    )
                    .unwrap(),
                );
            }
        }
        let c = EmpiricalDist::from_samples(&merged, 0.1).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn convergence_in_total_variation() {
        let log = uniform_log(10, 100, 9.0, 0.0);
        let run = |n| {
            predict_xc(
                &log,
                &kia(),
                &consts(),
                Season::Summer,
                &MassModel::default(),
                &AuxPowerModel::default(),
                n,
                0.1,
                29,
            )
            .unwrap()
        };
        let reference = run(100_000);
        let coarse = run(100).tv_distance(&reference).unwrap();
        let fine = run(10_000).tv_distance(&reference).unwrap();
        assert!(fine < coarse, "tv {fine} !< {coarse}");
    }

    #[test]
    fn support_is_positive_for_moving_logs() {
        let log = uniform_log(5, 200, 8.0, 0.0);
        let d = predict_xc(
            &log,
            &kia(),
            &consts(),
            Season::Summer,
            &MassModel::default(),
            &AuxPowerModel::default(),
            2_000,
            0.1,
            31,
        )
        .unwrap();
        assert!(d.origin_kwh() > 0.0);
    }

    #[test]
    fn stats_on_small_fixtures() {
        let single = EmpiricalDist::from_samples(&[1.23], 0.1).unwrap();
        let s = single.stats();
        assert_relative_eq!(s.mean_kwh, single.center_kwh(single.min_bin()));
        assert_eq!(s.variance_kwh2, 0.0);

        // Two equal masses: the tie resolves to the lower bin.
        let two = EmpiricalDist::from_masses(10, vec![0.5, 0.5], 0.1, 2).unwrap();
        assert_eq!(two.stats().mode_bin, 10);

        // Binned moments track the raw sample moments to within a bin width.
        let samples: Vec<f64> = (0..1000).map(|i| 5.0 + (i as f64) * 0.007).collect();
        let d = EmpiricalDist::from_samples(&samples, 0.1).unwrap();
        let raw_mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let raw_var =
            samples.iter().map(|x| (x - raw_mean).powi(2)).sum::<f64>() / samples.len() as f64;
        let st = d.stats();
        assert!((st.mean_kwh - raw_mean).abs() < 0.1);
        assert!((st.variance_kwh2 - raw_var).abs() < 0.1);
    }

    #[test]
    fn csv_export_format() {
        let d = EmpiricalDist::from_masses(-2, vec![0.25, 0.5, 0.25], 0.5, 4).unwrap();
        let csv = d.to_csv_string();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("bin_left_kwh,bin_right_kwh,probability"));
        let first = lines.next().unwrap();
        assert!(first.starts_with("-1.000000,-0.500000,"), "{first}");
        // 15 significant digits in scientific notation.
        assert!(first.ends_with("e-1") || first.contains("e0"), "{first}");
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn negative_axis_binning() {
        assert_eq!(bin_index(-0.05, 0.1), -1);
        assert_eq!(bin_index(0.05, 0.1), 0);
        assert_eq!(bin_index(-3.21, 0.1), -33);
        let d = EmpiricalDist::from_samples(&[-1.0, -0.5, 0.5], 0.5, ).unwrap();
        assert_eq!(d.min_bin(), -2);
        assert_eq!(d.max_bin(), 1);
    }

    #[test]
    fn grid_mismatch_is_detected() {
        let a = EmpiricalDist::from_samples(&[1.0], 0.1).unwrap();
        let b = EmpiricalDist::from_samples(&[1.0], 0.2).unwrap();
        assert!(a.tv_distance(&b).is_err());
    }
}
