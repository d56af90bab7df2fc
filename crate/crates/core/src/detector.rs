//! Bayesian hypothesis test for undeclared charging.
//!
//! The observed differential state-of-charge `x_D = x_0 - x_1` relates to
//! the cumulative battery draw `x_C` and the undeclared charging energy
//! `x_U` through conservation: `x_D = x_C - x_U`. Under `H0` (no hidden
//! charging) `x_U = 0`, so `x_D` follows the predictive distribution of
//! `x_C` directly. Under `H1`, `x_U` is a uniform slab, and the `x_D`
//! distribution is the discrete correlation of the `x_C` histogram with the
//! slab discretized onto the same bin grid:
//!
//! ```text
//! f_h1[j] = sum_u f_xc[j + u] * slab[u]
//! ```
//!
//! The posterior follows from Bayes' rule on the two bin masses at the
//! observed bin:
//!
//! ```text
//! Pr[H1 | x_D] = p1 f_h1 / (p1 f_h1 + (1 - p1) f_h0)
//! ```
//!
//! Out-of-support observations resolve by convention rather than by the
//! ratio: below both supports the posterior is pinned to 1 (no admissible
//! draw explains the observation without hidden charging), above both it is
//! pinned to 0 (drawing more than any predicted scenario cannot indicate
//! hidden charging); both cases carry a flag so callers can surface the
//! anomaly. An interior bin where both masses vanish falls back to the
//! prior, again flagged, to avoid manufacturing certainty out of Monte
//! Carlo sparsity.
//!
//! Hard decisions are ternary: posteriors in `[0, 0.4]` accept `H0`, in
//! `(0.6, 1]` accept `H1`, and anything in between is censored as an
//! erasure.

use std::fmt;

use thiserror::Error;

use crate::models::UndeclaredModel;
use crate::predictor::{DistError, EmpiricalDist};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("posterior must lie in [0, 1], got {0}")]
    PosteriorRange(f64),
    #[error("decision thresholds must satisfy 0 <= h0_max <= h1_min <= 1, got ({h0_max}, {h1_min})")]
    InvalidThresholds { h0_max: f64, h1_min: f64 },
    #[error("state of charge {value} kWh outside [0, {e_max}] kWh")]
    SocRange { value: f64, e_max: f64 },
    #[error("undeclared slab ({min}, {max}] kWh is empty on a {bin_width} kWh grid")]
    EmptySlab { min: f64, max: f64, bin_width: f64 },
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Ternary decision thresholds; defaults 0.4 / 0.6.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionThresholds {
    /// Posteriors `<= h0_max` decide `H0`.
    pub h0_max: f64,
    /// Posteriors `> h1_min` decide `H1`.
    pub h1_min: f64,
}

impl Default for DecisionThresholds {
    fn default() -> Self {
        DecisionThresholds { h0_max: 0.4, h1_min: 0.6 }
    }
}

impl DecisionThresholds {
    pub fn new(h0_max: f64, h1_min: f64) -> Result<Self, DetectorError> {
        if !(h0_max.is_finite()
            && h1_min.is_finite()
            && (0.0..=1.0).contains(&h0_max)
            && (0.0..=1.0).contains(&h1_min)
            && h0_max <= h1_min)
        {
            return Err(DetectorError::InvalidThresholds { h0_max, h1_min });
        }
        Ok(DecisionThresholds { h0_max, h1_min })
    }
}

/// Outcome of thresholding the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    H0,
    H1,
    /// Equivocal posterior; judgment withheld.
    Erasure,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::H0 => "H0",
            Decision::H1 => "H1",
            Decision::Erasure => "E",
        })
    }
}

/// Where the observed differential SoC fell relative to the two mixture
/// supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportFlag {
    BelowBothSupports,
    AboveBothSupports,
    InSupport,
}

impl fmt::Display for SupportFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SupportFlag::BelowBothSupports => "below_both_supports",
            SupportFlag::AboveBothSupports => "above_both_supports",
            SupportFlag::InSupport => "in_support",
        })
    }
}

/// Result of classifying one observed differential SoC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorOutput {
    pub posterior_h1: f64,
    pub decision: Decision,
    pub f_h0_at_xd: f64,
    pub f_h1_at_xd: f64,
    pub xd_bin_index: i64,
    pub support_flag: SupportFlag,
}

/// State-of-charge readings bracketing a certified interval: `x0` right
/// after the previous certified charge, `x1` at the current plug-in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocPair {
    pub x0_kwh: f64,
    pub x1_kwh: f64,
}

impl SocPair {
    pub fn new(x0_kwh: f64, x1_kwh: f64, e_max_kwh: f64) -> Result<Self, DetectorError> {
        for value in [x0_kwh, x1_kwh] {
            if !(value.is_finite() && (0.0..=e_max_kwh).contains(&value)) {
                return Err(DetectorError::SocRange { value, e_max: e_max_kwh });
            }
        }
        Ok(SocPair { x0_kwh, x1_kwh })
    }

    /// Differential SoC, `x0 - x1` (signed).
    pub fn xd_kwh(&self) -> f64 {
        self.x0_kwh - self.x1_kwh
    }
}

/// Uniform slab `(x_u_min, x_u_max]` discretized onto the grid of width `w`.
///
/// Values quantize upward: index `u` stands for `x_U` in `((u-1)w, uw]`, so
/// the open left end of the slab is excluded and its closed right end
/// included. Partial end bins (when the slab bounds are not grid multiples)
/// carry proportional mass. Returns `(first_index, masses)`.
pub fn discretize_slab(
    undeclared: &UndeclaredModel,
    bin_width_kwh: f64,
) -> Result<(i64, Vec<f64>), DetectorError> {
    let (min, max) = (undeclared.x_u_min_kwh, undeclared.x_u_max_kwh);
    let w = bin_width_kwh;
    if !(w.is_finite() && w > 0.0) {
        return Err(DistError::InvalidBinWidth(w).into());
    }
    let u_lo = snapped_units(min, w).map_or_else(|| (min / w).ceil() as i64, |q| q + 1);
    let u_hi = snapped_units(max, w).unwrap_or_else(|| (max / w).ceil() as i64);
    if u_hi < u_lo {
        return Err(DetectorError::EmptySlab { min, max, bin_width: w });
    }
    let exact = snapped_units(min, w).is_some() && snapped_units(max, w).is_some();
    let n = (u_hi - u_lo + 1) as usize;
    let masses = if exact {
        vec![1.0 / n as f64; n]
    } else {
        let width = max - min;
        let mut masses = Vec::with_capacity(n);
        for u in u_lo..=u_hi {
            let lo = ((u - 1) as f64 * w).max(min);
            let hi = (u as f64 * w).min(max);
            masses.push(((hi - lo) / width).max(0.0));
        }
        let total: f64 = masses.iter().sum();
        for m in &mut masses {
            *m /= total;
        }
        masses
    };
    Ok((u_lo, masses))
}

/// Grid position of `x` when it sits (within rounding noise) on a grid
/// multiple of `w`; `None` otherwise.
fn snapped_units(x: f64, w: f64) -> Option<i64> {
    let q = x / w;
    let r = q.round();
    if (q - r).abs() <= 1e-9 * q.abs().max(1.0) {
        Some(r as i64)
    } else {
        None
    }
}

/// Distribution of the differential SoC under `H1`: the discrete
/// correlation of the `x_C` histogram with the discretized slab,
/// `f[j] = sum_u f_xc[j + u] * slab[u]`.
///
/// The support is exactly the sliding-sum range: from
/// `min_bin(x_C) - u_max` through `max_bin(x_C) - u_min`.
pub fn xd_dist_h1(
    xc_dist: &EmpiricalDist,
    undeclared: &UndeclaredModel,
) -> Result<EmpiricalDist, DetectorError> {
    let w = xc_dist.bin_width_kwh();
    let (u_lo, slab) = discretize_slab(undeclared, w)?;
    let u_hi = u_lo + slab.len() as i64 - 1;
    let first = xc_dist.min_bin() - u_hi;
    let last = xc_dist.max_bin() - u_lo;
    let mut masses = vec![0.0; (last - first + 1) as usize];
    for (offset, out) in masses.iter_mut().enumerate() {
        let j = first + offset as i64;
        let mut acc = 0.0;
        for (k, &su) in slab.iter().enumerate() {
            let u = u_lo + k as i64;
            acc += su * xc_dist.mass_at(j + u);
        }
        *out = acc;
    }
    Ok(EmpiricalDist::from_masses(first, masses, w, xc_dist.sample_count())?)
}

/// A prepared detector: the `x_C` predictive distribution, its `H1`
/// correlation, the prior, and the decision thresholds. Classifying an
/// observation is then a pair of bin lookups, so one detector can serve any
/// number of observations.
#[derive(Debug, Clone)]
pub struct Detector {
    xc: EmpiricalDist,
    xd_h1: EmpiricalDist,
    p1: f64,
    thresholds: DecisionThresholds,
}

impl Detector {
    pub fn new(
        xc_dist: EmpiricalDist,
        undeclared: &UndeclaredModel,
        thresholds: DecisionThresholds,
    ) -> Result<Self, DetectorError> {
        let xd_h1 = xd_dist_h1(&xc_dist, undeclared)?;
        Ok(Detector {
            xc: xc_dist,
            xd_h1,
            p1: undeclared.p1,
            thresholds,
        })
    }

    pub fn xc(&self) -> &EmpiricalDist {
        &self.xc
    }

    pub fn xd_h1(&self) -> &EmpiricalDist {
        &self.xd_h1
    }

    pub fn p1(&self) -> f64 {
        self.p1
    }

    /// Nominal support of the mixture on the `x_D` axis (lowest and highest
    /// occupied bins across both components).
    pub fn support(&self) -> (i64, i64) {
        (self.xd_h1.min_bin(), self.xc.max_bin())
    }

    /// Classifies one observed differential SoC (kWh). Panics on non-finite
    /// input; SoC readings are validated upstream by [`SocPair::new`].
    pub fn classify(&self, x_d_kwh: f64) -> DetectorOutput {
        assert!(x_d_kwh.is_finite(), "differential SoC must be finite");
        let bin = self.xc.bin_of(x_d_kwh);
        let (lo, hi) = self.support();
        let f_h0 = self.xc.mass_at(bin);
        let f_h1 = self.xd_h1.mass_at(bin);

        let (posterior, flag) = if bin < lo {
            (1.0, SupportFlag::BelowBothSupports)
        } else if bin > hi {
            (0.0, SupportFlag::AboveBothSupports)
        } else {
            let numerator = self.p1 * f_h1;
            let denominator = numerator + (1.0 - self.p1) * f_h0;
            if denominator == 0.0 {
                // Interior bin that neither component reached.
                (self.p1, SupportFlag::InSupport)
            } else {
                (numerator / denominator, SupportFlag::InSupport)
            }
        };
        let decision =
            ternary_decision(posterior, &self.thresholds).expect("posterior in range by construction");
        DetectorOutput {
            posterior_h1: posterior,
            decision,
            f_h0_at_xd: f_h0,
            f_h1_at_xd: f_h1,
            xd_bin_index: bin,
            support_flag: flag,
        }
    }

    /// Classification across every bin of the nominal support, evaluated at
    /// bin centers; the posterior-versus-`x_D` curve.
    pub fn posterior_curve(&self) -> Vec<(i64, DetectorOutput)> {
        let (lo, hi) = self.support();
        (lo..=hi)
            .map(|bin| (bin, self.classify(self.xc.center_kwh(bin))))
            .collect()
    }
}

/// One-shot posterior evaluation. Builds the `H1` correlation internally;
/// batch callers should construct a [`Detector`] once instead.
pub fn posterior_h1(
    xc_dist: &EmpiricalDist,
    undeclared: &UndeclaredModel,
    x_d_kwh: f64,
    thresholds: &DecisionThresholds,
) -> Result<DetectorOutput, DetectorError> {
    let detector = Detector::new(xc_dist.clone(), undeclared, *thresholds)?;
    Ok(detector.classify(x_d_kwh))
}

/// Ternary decision rule: `[0, h0_max] -> H0`, `(h1_min, 1] -> H1`,
/// otherwise erasure.
pub fn ternary_decision(
    posterior: f64,
    thresholds: &DecisionThresholds,
) -> Result<Decision, DetectorError> {
    if !(posterior.is_finite() && (0.0..=1.0).contains(&posterior)) {
        return Err(DetectorError::PosteriorRange(posterior));
    }
    if posterior <= thresholds.h0_max {
        Ok(Decision::H0)
    } else if posterior > thresholds.h1_min {
        Ok(Decision::H1)
    } else {
        Ok(Decision::Erasure)
    }
}

/// Prior for the next certified interval: this interval's posterior decayed
/// by the forgetting factor, `p1_next = lambda * posterior`.
///
/// Both inputs are expected in `[0, 1]`.
pub fn update_prior(posterior: f64, lambda: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&posterior));
    debug_assert!((0.0..=1.0).contains(&lambda));
    lambda * posterior
}

/// Probability-weighted compliance bonus, `(1 - posterior) * g_max`.
pub fn weighted_bonus(posterior: f64, g_max: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&posterior));
    debug_assert!(g_max >= 0.0);
    (1.0 - posterior) * g_max
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn point_mass(bin: i64, w: f64) -> EmpiricalDist {
        EmpiricalDist::from_masses(bin, vec![1.0], w, 1).unwrap()
    }

    fn slab_model(min: f64, max: f64) -> UndeclaredModel {
        UndeclaredModel::new(0.5, min, max).unwrap()
    }

    #[test]
    fn point_mass_correlation_spreads_uniformly_below() {
        // x_C concentrated in bin 100 on a 0.1 kWh grid; slab (0, 1] kWh
        // covers 10 bins. The H1 distribution puts 1/10 on each of the ten
        // bins ending at the point mass.
        let xc = point_mass(100, 0.1);
        let xd = xd_dist_h1(&xc, &slab_model(0.0, 1.0)).unwrap();
        assert_eq!(xd.min_bin(), 90);
        assert_eq!(xd.max_bin(), 99);
        for b in 90..=99 {
            assert_relative_eq!(xd.mass_at(b), 0.1, max_relative = 1e-12);
        }
    }

    #[test]
    fn single_bin_slab_shifts_down_one() {
        let masses = vec![0.2, 0.5, 0.3];
        let xc = EmpiricalDist::from_masses(40, masses.clone(), 0.1, 10).unwrap();
        let xd = xd_dist_h1(&xc, &slab_model(0.0, 0.1)).unwrap();
        assert_eq!(xd.min_bin(), 39);
        assert_eq!(xd.max_bin(), 41);
        for (i, &m) in masses.iter().enumerate() {
            assert_relative_eq!(xd.mass_at(39 + i as i64), m, max_relative = 1e-12);
        }
    }

    /// Brute-force reference: enumerate every (x_C bin, x_U bin) pair of the
    /// joint grid and accumulate the difference bins.
    fn brute_force_xd_h1(xc: &EmpiricalDist, und: &UndeclaredModel) -> BTreeMap<i64, f64> {
        let (u_lo, slab) = discretize_slab(und, xc.bin_width_kwh()).unwrap();
        let mut out = BTreeMap::new();
        for c in xc.min_bin()..=xc.max_bin() {
            for (k, &su) in slab.iter().enumerate() {
                let u = u_lo + k as i64;
                *out.entry(c - u).or_insert(0.0) += xc.mass_at(c) * su;
            }
        }
        out
    }

    fn random_fixture(rng: &mut ChaCha8Rng) -> (EmpiricalDist, UndeclaredModel) {
        let n_bins = rng.random_range(1..=30usize);
        let first = rng.random_range(-20..60i64);
        let mut masses: Vec<f64> = (0..n_bins).map(|_| rng.random_range(0.0..1.0)).collect();
        // Sprinkle interior zeros and pin the ends positive.
        for m in masses.iter_mut() {
            if rng.random_bool(0.2) {
                *m = 0.0;
            }
        }
        masses[0] = masses[0].max(0.05);
        let last = n_bins - 1;
        masses[last] = masses[last].max(0.05);
        let xc = EmpiricalDist::from_masses(first, masses, 0.1, 1000).unwrap();
        let slab_bins = rng.random_range(1..=10i64);
        let und =
            UndeclaredModel::new(rng.random_range(0.05..0.95), 0.0, slab_bins as f64 * 0.1).unwrap();
        (xc, und)
    }

    #[test]
    fn correlation_matches_brute_force_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..50 {
            let (xc, und) = random_fixture(&mut rng);
            let xd = xd_dist_h1(&xc, &und).unwrap();
            let brute = brute_force_xd_h1(&xc, &und);
            for (&bin, &mass) in &brute {
                assert_abs_diff_eq!(xd.mass_at(bin), mass, epsilon = 1e-12);
            }
            let brute_total: f64 = brute.values().sum();
            assert_abs_diff_eq!(brute_total, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn support_bounds_are_bin_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let (xc, und) = random_fixture(&mut rng);
            let (u_lo, slab) = discretize_slab(&und, xc.bin_width_kwh()).unwrap();
            let u_hi = u_lo + slab.len() as i64 - 1;
            let xd = xd_dist_h1(&xc, &und).unwrap();
            assert_eq!(xd.min_bin(), xc.min_bin() - u_hi);
            assert_eq!(xd.max_bin(), xc.max_bin() - u_lo);
        }
    }

    #[test]
    fn slab_discretization_exact_and_partial() {
        // (0, 35] on a 0.1 grid: 350 equal bins starting at index 1.
        let (u_lo, slab) = discretize_slab(&slab_model(0.0, 35.0), 0.1).unwrap();
        assert_eq!(u_lo, 1);
        assert_eq!(slab.len(), 350);
        for &m in &slab {
            assert_relative_eq!(m, 1.0 / 350.0, max_relative = 1e-12);
        }

        // (7, 35]: floor at bin 71.
        let (u_lo, slab) = discretize_slab(&slab_model(7.0, 35.0), 0.1).unwrap();
        assert_eq!(u_lo, 71);
        assert_eq!(slab.len(), 280);

        // Misaligned ends get proportional mass.
        let (u_lo, slab) = discretize_slab(&slab_model(0.05, 0.25), 0.1).unwrap();
        assert_eq!(u_lo, 1);
        assert_eq!(slab.len(), 3);
        assert_relative_eq!(slab[0], 0.25, max_relative = 1e-9);
        assert_relative_eq!(slab[1], 0.5, max_relative = 1e-9);
        assert_relative_eq!(slab[2], 0.25, max_relative = 1e-9);
        assert_abs_diff_eq!(slab.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mixture_identity_total_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (xc, und) = random_fixture(&mut rng);
            let xd = xd_dist_h1(&xc, &und).unwrap();
            let lo = xd.min_bin().min(xc.min_bin());
            let hi = xd.max_bin().max(xc.max_bin());
            let mut total = 0.0;
            for b in lo..=hi {
                total += und.p1 * xd.mass_at(b) + (1.0 - und.p1) * xc.mass_at(b);
            }
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn equal_likelihood_returns_prior() {
        // Uniform x_C over 10 bins correlated with a 1-bin slab is uniform
        // again; every overlapping bin has f_h1 = f_h0, so the posterior
        // equals the prior there.
        let xc = EmpiricalDist::from_masses(10, vec![0.1; 10], 0.1, 100).unwrap();
        let und = UndeclaredModel::new(0.3, 0.0, 0.1).unwrap();
        let det = Detector::new(xc.clone(), &und, DecisionThresholds::default()).unwrap();
        let out = det.classify(xc.center_kwh(12));
        assert_relative_eq!(out.posterior_h1, 0.3, max_relative = 1e-12);
        assert_eq!(out.support_flag, SupportFlag::InSupport);
    }

    #[test]
    fn zero_h0_likelihood_pins_posterior_to_one() {
        let xc = point_mass(100, 0.1);
        let und = slab_model(0.0, 1.0);
        let det = Detector::new(xc.clone(), &und, DecisionThresholds::default()).unwrap();
        // Bin 95: reachable by the slab, unreachable under H0.
        let out = det.classify(xc.center_kwh(95));
        assert_eq!(out.posterior_h1, 1.0);
        assert_eq!(out.decision, Decision::H1);
        assert_eq!(out.support_flag, SupportFlag::InSupport);
        assert_eq!(out.f_h0_at_xd, 0.0);
        assert!(out.f_h1_at_xd > 0.0);
    }

    #[test]
    fn posterior_at_mode_is_bounded_by_half() {
        // f_h1 at any bin is a slab-average of x_C masses, hence no larger
        // than the modal mass; with p1 = 0.5 the posterior there is <= 0.5.
        let masses = vec![0.05, 0.1, 0.4, 0.25, 0.15, 0.05];
        let xc = EmpiricalDist::from_masses(50, masses, 0.1, 500).unwrap();
        let und = slab_model(0.0, 0.3);
        let det = Detector::new(xc.clone(), &und, DecisionThresholds::default()).unwrap();
        let mode = xc.stats().mode_bin;
        let out = det.classify(xc.center_kwh(mode));
        assert!(out.posterior_h1 <= 0.5 + 1e-12, "{}", out.posterior_h1);
    }

    #[test]
    fn out_of_support_flags() {
        let xc = point_mass(100, 0.1);
        let und = slab_model(0.0, 1.0);
        let det = Detector::new(xc.clone(), &und, DecisionThresholds::default()).unwrap();

        let below = det.classify(xc.center_kwh(80));
        assert_eq!(below.posterior_h1, 1.0);
        assert_eq!(below.support_flag, SupportFlag::BelowBothSupports);
        assert_eq!(below.decision, Decision::H1);

        let above = det.classify(xc.center_kwh(101));
        assert_eq!(above.posterior_h1, 0.0);
        assert_eq!(above.support_flag, SupportFlag::AboveBothSupports);
        assert_eq!(above.decision, Decision::H0);
    }

    #[test]
    fn interior_empty_bin_falls_back_to_prior() {
        // Both components have a hole at bin 11.
        let xc = EmpiricalDist::from_masses(10, vec![0.5, 0.0, 0.0, 0.5], 0.1, 4).unwrap();
        let und = UndeclaredModel::new(0.37, 0.0, 0.1).unwrap();
        let det = Detector::new(xc.clone(), &und, DecisionThresholds::default()).unwrap();
        let out = det.classify(xc.center_kwh(11));
        assert_eq!(out.f_h0_at_xd, 0.0);
        assert_eq!(out.f_h1_at_xd, 0.0);
        assert_eq!(out.posterior_h1, 0.37);
        assert_eq!(out.support_flag, SupportFlag::InSupport);
    }

    #[test]
    fn posterior_is_monotone_in_p1() {
        let masses = vec![0.1, 0.2, 0.4, 0.2, 0.1];
        let xc = EmpiricalDist::from_masses(30, masses, 0.1, 100).unwrap();
        let x_d = xc.center_kwh(31);
        let mut last = -1.0;
        for &p1 in &[0.1, 0.3, 0.5, 0.7, 0.9] {
            let und = UndeclaredModel::new(p1, 0.0, 0.3).unwrap();
            let out = posterior_h1(&xc, &und, x_d, &DecisionThresholds::default()).unwrap();
            assert!(out.posterior_h1 > last);
            last = out.posterior_h1;
        }
    }

    #[test]
    fn posterior_matches_joint_enumeration() {
        // Posterior via the correlation path versus explicit enumeration of
        // the joint (x_C bin, x_U bin, hypothesis) space.
        let mut rng = ChaCha8Rng::seed_from_u64(4321);
        for _ in 0..25 {
            let (xc, und) = random_fixture(&mut rng);
            let det = Detector::new(xc.clone(), &und, DecisionThresholds::default()).unwrap();
            let brute = brute_force_xd_h1(&xc, &und);
            for bin in (xc.min_bin() - 12)..=(xc.max_bin() + 2) {
                let f1 = brute.get(&bin).copied().unwrap_or(0.0);
                let f0 = xc.mass_at(bin);
                let out = det.classify(xc.center_kwh(bin));
                let expected = if bin < det.support().0 {
                    1.0
                } else if bin > det.support().1 {
                    0.0
                } else if und.p1 * f1 + (1.0 - und.p1) * f0 == 0.0 {
                    und.p1
                } else {
                    und.p1 * f1 / (und.p1 * f1 + (1.0 - und.p1) * f0)
                };
                assert_abs_diff_eq!(out.posterior_h1, expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ternary_boundaries() {
        let t = DecisionThresholds::default();
        assert_eq!(ternary_decision(0.0, &t).unwrap(), Decision::H0);
        assert_eq!(ternary_decision(0.4, &t).unwrap(), Decision::H0);
        assert_eq!(ternary_decision(0.4 + 1e-12, &t).unwrap(), Decision::Erasure);
        assert_eq!(ternary_decision(0.6, &t).unwrap(), Decision::Erasure);
        assert_eq!(ternary_decision(0.6 + 1e-12, &t).unwrap(), Decision::H1);
        assert_eq!(ternary_decision(1.0, &t).unwrap(), Decision::H1);
        assert!(ternary_decision(1.5, &t).is_err());
        assert!(ternary_decision(-0.1, &t).is_err());
        assert!(ternary_decision(f64::NAN, &t).is_err());
    }

    #[test]
    fn prior_propagation_and_bonus() {
        assert_eq!(update_prior(0.8, 1.0), 0.8);
        assert_eq!(update_prior(0.8, 0.0), 0.0);
        assert_relative_eq!(update_prior(0.5, 0.9), 0.45, max_relative = 1e-12);

        assert_eq!(weighted_bonus(0.0, 100.0), 100.0);
        assert_eq!(weighted_bonus(1.0, 100.0), 0.0);
        assert_relative_eq!(weighted_bonus(0.25, 100.0), 75.0, max_relative = 1e-12);
    }

    #[test]
    fn soc_pair_bounds() {
        assert!(SocPair::new(30.0, 10.0, 35.0).is_ok());
        assert!(SocPair::new(36.0, 10.0, 35.0).is_err());
        assert!(SocPair::new(30.0, -0.1, 35.0).is_err());
        assert_eq!(SocPair::new(30.0, 10.0, 35.0).unwrap().xd_kwh(), 20.0);
    }

    proptest! {
        #[test]
        fn decision_partition_is_total(p in 0.0..=1.0f64) {
            let t = DecisionThresholds::default();
            let d = ternary_decision(p, &t).unwrap();
            let expected = if p <= 0.4 {
                Decision::H0
            } else if p > 0.6 {
                Decision::H1
            } else {
                Decision::Erasure
            };
            prop_assert_eq!(d, expected);
        }

        #[test]
        fn posterior_stays_in_unit_interval(
            seed in 0u64..200,
            x_d in -40.0..40.0f64,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (xc, und) = random_fixture(&mut rng);
            let out = posterior_h1(&xc, &und, x_d, &DecisionThresholds::default()).unwrap();
            prop_assert!((0.0..=1.0).contains(&out.posterior_h1));
        }
    }
}
