//! Prior models for the unobserved states of the energy model.
//!
//! Three sources of uncertainty are modelled:
//!
//! - **Passenger mass** — a five-component Gaussian mixture over the number
//!   of occupants (driver included), truncated to positive mass by
//!   rejection. Component k has mean `k * 74` kg and standard deviation
//!   `12 * sqrt(k)` kg; the occupancy probabilities decrease strictly and
//!   average about 1.61 people per trip.
//! - **Auxiliary power** — the average HVAC/lights/infotainment draw during
//!   trips, Gamma-distributed with season-specific shape and scale
//!   (winter: shape 3, scale 800, mean 2400 W; summer: shape 2, scale 400,
//!   mean 800 W). Shape and scale follow from seasonal mean and variance by
//!   moment matching.
//! - **Undeclared energy** — a slab-and-spike mixture: a point mass at zero
//!   when no hidden charging occurred, a uniform slab over
//!   `(x_u_min, x_u_max]` kWh when it did.
//!
//! All samplers are deterministic functions of the supplied RNG stream.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Normal};
use thiserror::Error;

use crate::trip::Season;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("occupancy pmf entries must be nonnegative, got {0:?}")]
    NegativePmfEntry(f64),
    #[error("occupancy pmf must sum to 1 within 1e-12, got {0}")]
    PmfSum(f64),
    #[error("occupancy pmf must be strictly decreasing in k")]
    PmfNotDecreasing,
    #[error("per-person mean mass must be positive, got {0}")]
    InvalidPerPersonMean(f64),
    #[error("sigma coefficient must be nonnegative, got {0}")]
    InvalidSigmaCoeff(f64),
    #[error("gamma {name} must be positive and finite, got {value}")]
    InvalidGamma { name: &'static str, value: f64 },
    #[error("moment matching requires positive mean and variance, got mean {mean}, variance {variance}")]
    InvalidMoments { mean: f64, variance: f64 },
    #[error("prior probability p1 must lie in [0, 1], got {0}")]
    InvalidP1(f64),
    #[error("undeclared range must satisfy 0 <= min < max, got ({min}, {max}]")]
    InvalidUndeclaredRange { min: f64, max: f64 },
}

/// The two behaviours under test: hidden charging occurred (`H1`) or not
/// (`H0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Hypothesis {
    H0,
    H1,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hypothesis::H0 => "H0",
            Hypothesis::H1 => "H1",
        })
    }
}

/// Gaussian mixture model of the net passenger mass carried per trip.
#[derive(Debug, Clone, PartialEq)]
pub struct MassModel {
    occupancy_pmf: [f64; 5],
    per_person_mean_kg: f64,
    sigma_coeff: f64,
}

impl Default for MassModel {
    fn default() -> Self {
        MassModel::new([0.61, 0.23, 0.11, 0.04, 0.01], 74.0, 12.0).unwrap()
    }
}

impl MassModel {
    pub fn new(
        occupancy_pmf: [f64; 5],
        per_person_mean_kg: f64,
        sigma_coeff: f64,
    ) -> Result<Self, ModelError> {
        let mut sum = 0.0;
        for &p in &occupancy_pmf {
            if !(p.is_finite() && p >= 0.0) {
                return Err(ModelError::NegativePmfEntry(p));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ModelError::PmfSum(sum));
        }
        // Strictly decreasing while positive; a zero tail (degenerate
        // occupancy models) is allowed.
        if occupancy_pmf
            .windows(2)
            .any(|w| w[1] > w[0] || (w[1] == w[0] && w[1] > 0.0))
        {
            return Err(ModelError::PmfNotDecreasing);
        }
        if !(per_person_mean_kg.is_finite() && per_person_mean_kg > 0.0) {
            return Err(ModelError::InvalidPerPersonMean(per_person_mean_kg));
        }
        if !(sigma_coeff.is_finite() && sigma_coeff >= 0.0) {
            return Err(ModelError::InvalidSigmaCoeff(sigma_coeff));
        }
        Ok(MassModel {
            occupancy_pmf,
            per_person_mean_kg,
            sigma_coeff,
        })
    }

    pub fn occupancy_pmf(&self) -> [f64; 5] {
        self.occupancy_pmf
    }

    pub fn per_person_mean_kg(&self) -> f64 {
        self.per_person_mean_kg
    }

    pub fn sigma_coeff(&self) -> f64 {
        self.sigma_coeff
    }

    /// Expected number of occupants, `sum k * p_k`.
    pub fn expected_occupancy(&self) -> f64 {
        self.occupancy_pmf
            .iter()
            .enumerate()
            .map(|(i, &p)| (i + 1) as f64 * p)
            .sum()
    }

    /// Mean and standard deviation of the k-occupant component (k in 1..=5).
    pub fn component(&self, k: usize) -> (f64, f64) {
        assert!((1..=5).contains(&k));
        (
            k as f64 * self.per_person_mean_kg,
            self.sigma_coeff * (k as f64).sqrt(),
        )
    }

    fn draw_occupancy<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.occupancy_pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return i + 1;
            }
        }
        5
    }

    /// Draws a passenger mass: occupancy from the pmf, then the component
    /// Gaussian truncated to positive mass by rejection (the occupancy draw
    /// is kept across rejections).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sample_counting(rng).0
    }

    /// As [`sample`](Self::sample), also reporting how many rejected
    /// (nonpositive) draws preceded the accepted one.
    pub(crate) fn sample_counting<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, u64) {
        let k = self.draw_occupancy(rng);
        let (mu, sigma) = self.component(k);
        if sigma == 0.0 {
            return (mu, 0);
        }
        let normal = Normal::new(mu, sigma).expect("validated parameters");
        let mut rejections = 0;
        loop {
            let m = normal.sample(rng);
            if m > 0.0 {
                return (m, rejections);
            }
            rejections += 1;
        }
    }

    /// Mixture density at `m`, with each component renormalized to the
    /// positive half-line (matching the rejection sampler). Zero for m <= 0.
    ///
    /// Requires a positive `sigma_coeff`.
    pub fn density(&self, m_kg: f64) -> f64 {
        assert!(
            self.sigma_coeff > 0.0,
            "density undefined for a degenerate (sigma_coeff = 0) model"
        );
        if m_kg <= 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for (i, &p) in self.occupancy_pmf.iter().enumerate() {
            let (mu, sigma) = self.component(i + 1);
            let z = (m_kg - mu) / sigma;
            let pdf = (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            // Mass of the untruncated component on (0, inf).
            let positive_mass = 0.5 * (1.0 + libm::erf(mu / (sigma * std::f64::consts::SQRT_2)));
            total += p * pdf / positive_mass;
        }
        total
    }
}

/// Shape/scale parameterization of a Gamma distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub scale: f64,
}

impl GammaParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.shape.is_finite() && self.shape > 0.0) {
            return Err(ModelError::InvalidGamma {
                name: "shape",
                value: self.shape,
            });
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(ModelError::InvalidGamma {
                name: "scale",
                value: self.scale,
            });
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.shape * self.scale
    }

    pub fn variance(&self) -> f64 {
        self.shape * self.scale * self.scale
    }
}

/// Gamma parameters from a mean and variance: `shape = mean^2 / variance`,
/// `scale = variance / mean`.
pub fn gamma_from_moments(mean: f64, variance: f64) -> Result<GammaParams, ModelError> {
    if !(mean.is_finite() && mean > 0.0 && variance.is_finite() && variance > 0.0) {
        return Err(ModelError::InvalidMoments { mean, variance });
    }
    Ok(GammaParams {
        shape: mean * mean / variance,
        scale: variance / mean,
    })
}

/// Season-conditional Gamma model of the average auxiliary power (W).
#[derive(Debug, Clone, PartialEq)]
pub struct AuxPowerModel {
    winter: GammaParams,
    summer: GammaParams,
}

impl Default for AuxPowerModel {
    fn default() -> Self {
        AuxPowerModel::new(
            GammaParams { shape: 3.0, scale: 800.0 },
            GammaParams { shape: 2.0, scale: 400.0 },
        )
        .unwrap()
    }
}

impl AuxPowerModel {
    pub fn new(winter: GammaParams, summer: GammaParams) -> Result<Self, ModelError> {
        winter.validate()?;
        summer.validate()?;
        Ok(AuxPowerModel { winter, summer })
    }

    pub fn params_for(&self, season: Season) -> GammaParams {
        match season {
            Season::Winter => self.winter,
            Season::Summer => self.summer,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, season: Season, rng: &mut R) -> f64 {
        let p = self.params_for(season);
        GammaDist::new(p.shape, p.scale)
            .expect("validated parameters")
            .sample(rng)
    }
}

/// Slab-and-spike model of the total undeclared charging energy (kWh): a
/// point mass at zero under `H0`, a uniform slab over `(x_u_min, x_u_max]`
/// under `H1`, mixed with prior weight `p1` on `H1`.
#[derive(Debug, Clone, PartialEq)]
pub struct UndeclaredModel {
    pub p1: f64,
    pub x_u_min_kwh: f64,
    pub x_u_max_kwh: f64,
}

impl UndeclaredModel {
    pub fn new(p1: f64, x_u_min_kwh: f64, x_u_max_kwh: f64) -> Result<Self, ModelError> {
        if !(p1.is_finite() && (0.0..=1.0).contains(&p1)) {
            return Err(ModelError::InvalidP1(p1));
        }
        if !(x_u_min_kwh.is_finite()
            && x_u_max_kwh.is_finite()
            && x_u_min_kwh >= 0.0
            && x_u_min_kwh < x_u_max_kwh)
        {
            return Err(ModelError::InvalidUndeclaredRange {
                min: x_u_min_kwh,
                max: x_u_max_kwh,
            });
        }
        Ok(UndeclaredModel {
            p1,
            x_u_min_kwh,
            x_u_max_kwh,
        })
    }

    /// Full-battery slab `(0, e_max]` with the given prior.
    pub fn for_capacity(p1: f64, e_max_kwh: f64) -> Result<Self, ModelError> {
        Self::new(p1, 0.0, e_max_kwh)
    }

    /// Draws the undeclared energy under the given hypothesis: exactly zero
    /// under `H0`, uniform on `(x_u_min, x_u_max]` under `H1`.
    pub fn sample<R: Rng + ?Sized>(&self, hypothesis: Hypothesis, rng: &mut R) -> f64 {
        match hypothesis {
            Hypothesis::H0 => 0.0,
            Hypothesis::H1 => {
                let u: f64 = rng.random(); // [0, 1)
                self.x_u_max_kwh - (self.x_u_max_kwh - self.x_u_min_kwh) * u
            }
        }
    }
}
