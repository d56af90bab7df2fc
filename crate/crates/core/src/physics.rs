//! Discrete-time vehicle energy model: from a trip log plus an assumed
//! passenger mass and auxiliary power to the cumulative energy drawn from
//! the battery.
//!
//! The model walks the 1 s GPS samples of each trip. At sample time `t` the
//! instantaneous vehicle energy is
//!
//! ```text
//! E_veh[t] = 1/2 m_total v[t]^2  +  m_total g h[t]  +  1/2 J_int v[t]^2
//! ```
//!
//! and the step over `(t, t+1]` accounts for the energy required to change
//! `E_veh` plus three losses:
//!
//! ```text
//! dE_req  = E_veh[t+1] - E_veh[t]
//! dE_air  = 1/2 rho_air A_veh c_w v[t]^2 * ds      with ds = v[t] * 1 s
//! dE_roll = c_roll m_total g * ds
//! dE_aux  = W * 1 s
//! dE_cons = dE_req + dE_air + dE_roll + dE_aux
//! ```
//!
//! The energy actually drawn from the battery scales `dE_cons` by an
//! efficiency factor chosen by sign: `eta_prop` when consuming (propulsion),
//! `eta_recup` when returning energy (recuperation), zero when idle. The
//! cumulative draw over an interval is the sum of the per-step draws across
//! every trip, reported in kWh.
//!
//! All functions are pure; they can be called from any number of workers
//! with no shared state.

use std::path::Path;

use thiserror::Error;

use crate::config::KvMap;
use crate::trip::TripLog;

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("speed must be nonnegative and finite, got {0} m/s")]
    InvalidSpeed(f64),
    #[error("total mass {m_total_kg} kg is below kerb mass {m_veh_kg} kg")]
    MassBelowKerb { m_total_kg: f64, m_veh_kg: f64 },
    #[error("auxiliary power must be nonnegative and finite, got {0} W")]
    InvalidAuxPower(f64),
    #[error("passenger mass must be nonnegative and finite, got {0} kg")]
    InvalidPassengerMass(f64),
    #[error("altitude must be finite, got {0} m")]
    InvalidAltitude(f64),
    #[error("trip log contains no samples")]
    EmptyTripLog,
    #[error("invalid EV parameter {name}: {value} ({constraint})")]
    InvalidParam {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("invalid physics constant {name}: {value} ({constraint})")]
    InvalidConstant {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },
    #[error("EV parameter file: {0}")]
    ParamFile(String),
}

/// Known per-model EV constants.
///
/// `c_rad` is carried for completeness with vehicle datasheets but enters no
/// equation of the energy model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvParams {
    pub e_max_kwh: f64,
    pub m_veh_kg: f64,
    pub a_veh_m2: f64,
    pub j_int_kgm2: f64,
    pub c_rad: f64,
    pub c_roll: f64,
    pub c_w: f64,
    pub eta_prop: f64,
    pub eta_recup: f64,
}

impl EvParams {
    /// KIA Soul EV 2020 parameters, the bundled default vehicle.
    pub fn kia_soul_ev_2020() -> Self {
        EvParams {
            e_max_kwh: 35.0,
            m_veh_kg: 1682.0,
            a_veh_m2: 2.6,
            j_int_kgm2: 40.0,
            c_rad: 0.1,
            c_roll: 0.01,
            c_w: 0.35,
            eta_prop: 0.98,
            eta_recup: 0.96,
        }
    }

    pub fn validate(&self) -> Result<(), PhysicsError> {
        let positive: [(&'static str, f64); 7] = [
            ("e_max_kwh", self.e_max_kwh),
            ("m_veh_kg", self.m_veh_kg),
            ("a_veh_m2", self.a_veh_m2),
            ("j_int_kgm2", self.j_int_kgm2),
            ("c_rad", self.c_rad),
            ("c_roll", self.c_roll),
            ("c_w", self.c_w),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(PhysicsError::InvalidParam {
                    name,
                    value,
                    constraint: "must be strictly positive",
                });
            }
        }
        for (name, value) in [("eta_prop", self.eta_prop), ("eta_recup", self.eta_recup)] {
            if !(value.is_finite() && value > 0.0 && value < 1.0) {
                return Err(PhysicsError::InvalidParam {
                    name,
                    value,
                    constraint: "must lie in (0, 1)",
                });
            }
        }
        Ok(())
    }

    /// Loads parameters from a line-oriented `key = value` file. All nine
    /// keys are required.
    pub fn from_kv_str(text: &str) -> Result<Self, PhysicsError> {
        let kv = KvMap::parse(text).map_err(|e| PhysicsError::ParamFile(e.to_string()))?;
        let get = |key: &str| {
            kv.require_f64(key)
                .map_err(|e| PhysicsError::ParamFile(e.to_string()))
        };
        let params = EvParams {
            e_max_kwh: get("e_max_kwh")?,
            m_veh_kg: get("m_veh_kg")?,
            a_veh_m2: get("a_veh_m2")?,
            j_int_kgm2: get("j_int_kgm2")?,
            c_rad: get("c_rad")?,
            c_roll: get("c_roll")?,
            c_w: get("c_w")?,
            eta_prop: get("eta_prop")?,
            eta_recup: get("eta_recup")?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, PhysicsError> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| PhysicsError::ParamFile(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_kv_str(&text)
    }
}

pub const JOULES_PER_KWH: f64 = 3.6e6;

/// Environmental constants of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicsConstants {
    pub g_mps2: f64,
    pub rho_air_kgpm3: f64,
    /// Unit conversion; must be exactly 3.6e6.
    pub joules_per_kwh: f64,
}

impl Default for PhysicsConstants {
    /// g = 9.81 m/s^2 and dry air at 20 C, rho = 1.2041 kg/m^3.
    fn default() -> Self {
        PhysicsConstants {
            g_mps2: 9.81,
            rho_air_kgpm3: 1.2041,
            joules_per_kwh: JOULES_PER_KWH,
        }
    }
}

impl PhysicsConstants {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        for (name, value) in [("g_mps2", self.g_mps2), ("rho_air_kgpm3", self.rho_air_kgpm3)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(PhysicsError::InvalidConstant {
                    name,
                    value,
                    constraint: "must be strictly positive",
                });
            }
        }
        if self.joules_per_kwh != JOULES_PER_KWH {
            return Err(PhysicsError::InvalidConstant {
                name: "joules_per_kwh",
                value: self.joules_per_kwh,
                constraint: "must be exactly 3.6e6",
            });
        }
        Ok(())
    }
}

/// Energy bookkeeping for one 1 s step, all in joules.
///
/// `delta_e_cons` is exactly the sum of the four components; `delta_x` is
/// the signed energy drawn from the battery after the efficiency factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyStep {
    pub delta_e_req_j: f64,
    pub delta_e_air_j: f64,
    pub delta_e_roll_j: f64,
    pub delta_e_aux_j: f64,
    pub delta_e_cons_j: f64,
    pub delta_x_j: f64,
}

/// Instantaneous vehicle energy: kinetic + potential + internal rotation.
pub fn vehicle_energy(
    m_total_kg: f64,
    v_mps: f64,
    h_m: f64,
    params: &EvParams,
    consts: &PhysicsConstants,
) -> Result<f64, PhysicsError> {
    if !(v_mps.is_finite() && v_mps >= 0.0) {
        return Err(PhysicsError::InvalidSpeed(v_mps));
    }
    if !h_m.is_finite() {
        return Err(PhysicsError::InvalidAltitude(h_m));
    }
    if !m_total_kg.is_finite() || m_total_kg < params.m_veh_kg {
        return Err(PhysicsError::MassBelowKerb {
            m_total_kg,
            m_veh_kg: params.m_veh_kg,
        });
    }
    Ok(0.5 * m_total_kg * v_mps * v_mps
        + m_total_kg * consts.g_mps2 * h_m
        + 0.5 * params.j_int_kgm2 * v_mps * v_mps)
}

/// One 1 s step of the energy model, from state `(v_t, h_t)` to
/// `(v_next, h_next)` under total mass `m_total_kg` and average auxiliary
/// power `w_aux_w`.
#[allow(clippy::too_many_arguments)]
pub fn energy_step(
    v_t_mps: f64,
    v_next_mps: f64,
    h_t_m: f64,
    h_next_m: f64,
    m_total_kg: f64,
    w_aux_w: f64,
    params: &EvParams,
    consts: &PhysicsConstants,
) -> Result<EnergyStep, PhysicsError> {
    if !(w_aux_w.is_finite() && w_aux_w >= 0.0) {
        return Err(PhysicsError::InvalidAuxPower(w_aux_w));
    }
    let e_t = vehicle_energy(m_total_kg, v_t_mps, h_t_m, params, consts)?;
    let e_next = vehicle_energy(m_total_kg, v_next_mps, h_next_m, params, consts)?;

    let ds_m = v_t_mps; // distance covered in the 1 s interval
    let delta_e_air_j =
        0.5 * consts.rho_air_kgpm3 * params.a_veh_m2 * params.c_w * v_t_mps * v_t_mps * ds_m;
    let delta_e_roll_j = params.c_roll * m_total_kg * consts.g_mps2 * ds_m;
    let delta_e_aux_j = w_aux_w; // W * 1 s
    let delta_e_req_j = e_next - e_t;
    let delta_e_cons_j = delta_e_req_j + delta_e_air_j + delta_e_roll_j + delta_e_aux_j;
    let delta_x_j = if delta_e_cons_j > 0.0 {
        delta_e_cons_j * params.eta_prop
    } else if delta_e_cons_j < 0.0 {
        delta_e_cons_j * params.eta_recup
    } else {
        0.0
    };
    Ok(EnergyStep {
        delta_e_req_j,
        delta_e_air_j,
        delta_e_roll_j,
        delta_e_aux_j,
        delta_e_cons_j,
        delta_x_j,
    })
}

/// Cumulative energy drawn from the battery over every 1 s step of every
/// trip in the log, in kWh.
///
/// The passenger mass and auxiliary power are held constant across the
/// interval; auxiliary power applies only while a trip is in progress.
pub fn cumulative_draw(
    log: &TripLog,
    m_peop_kg: f64,
    w_aux_w: f64,
    params: &EvParams,
    consts: &PhysicsConstants,
) -> Result<f64, PhysicsError> {
    if !(m_peop_kg.is_finite() && m_peop_kg >= 0.0) {
        return Err(PhysicsError::InvalidPassengerMass(m_peop_kg));
    }
    if log.samples().is_empty() {
        return Err(PhysicsError::EmptyTripLog);
    }
    let m_total_kg = params.m_veh_kg + m_peop_kg;
    let mut total_j = 0.0;
    for trip in log.trips() {
        for pair in trip.windows(2) {
            let step = energy_step(
                pair[0].speed_mps,
                pair[1].speed_mps,
                pair[0].altitude_m,
                pair[1].altitude_m,
                m_total_kg,
                w_aux_w,
                params,
                consts,
            )?;
            total_j += step.delta_x_j;
        }
    }
    Ok(total_j / consts.joules_per_kwh)
}
