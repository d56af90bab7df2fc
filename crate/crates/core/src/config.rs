//! Line-oriented `key = value` configuration files, the application
//! configuration, and driver-state persistence.
//!
//! The format: one `key = value` pair per line, `#` starts a comment, blank
//! lines are ignored. Values are free text; typed accessors parse on demand
//! and report the offending key.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::detector::DecisionThresholds;
use crate::models::{AuxPowerModel, GammaParams, MassModel};
use crate::physics::EvParams;
use crate::trip::MonthMap;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("key `{key}`: invalid value `{value}` ({expected})")]
    BadValue {
        key: String,
        value: String,
        expected: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Parsed key-value file.
#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: BTreeMap<String, String>,
}

impl KvMap {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.trim().to_string(),
                });
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.trim().to_string(),
                });
            }
            if entries.insert(key.clone(), value).is_some() {
                return Err(ConfigError::DuplicateKey { line, key });
            }
        }
        Ok(KvMap { entries })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(&path).map_err(|e| ConfigError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn parse_value<T: std::str::FromStr>(&self, key: &str, expected: &str) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: v.to_string(),
                expected: expected.to_string(),
            }),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.parse_value(key, "a number")
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, ConfigError> {
        self.parse_value(key, "an unsigned integer")
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.parse_value(key, "an unsigned integer")
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, ConfigError> {
        self.get_f64(key)?
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    /// Comma-separated list of numbers.
    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = self.get(key) else { return Ok(None) };
        let parsed: Result<Vec<f64>, _> = v.split(',').map(|p| p.trim().parse::<f64>()).collect();
        parsed.map(Some).map_err(|_| ConfigError::BadValue {
            key: key.to_string(),
            value: v.to_string(),
            expected: "a comma-separated list of numbers".to_string(),
        })
    }

    pub fn get_u32_list(&self, key: &str) -> Result<Option<Vec<u32>>, ConfigError> {
        let Some(v) = self.get(key) else { return Ok(None) };
        let parsed: Result<Vec<u32>, _> = v.split(',').map(|p| p.trim().parse::<u32>()).collect();
        parsed.map(Some).map_err(|_| ConfigError::BadValue {
            key: key.to_string(),
            value: v.to_string(),
            expected: "a comma-separated list of months (1-12)".to_string(),
        })
    }
}

/// Applies the stochastic-model override keys shared by the application and
/// study configuration files: `occupancy_pmf`, `per_person_mean_kg`,
/// `sigma_coeff`, `winter_shape`, `winter_scale`, `summer_shape`,
/// `summer_scale`.
pub fn apply_model_overrides(
    kv: &KvMap,
    mass: &mut MassModel,
    aux: &mut AuxPowerModel,
) -> Result<(), ConfigError> {
    let mut pmf = mass.occupancy_pmf();
    if let Some(list) = kv.get_f64_list("occupancy_pmf")? {
        if list.len() != 5 {
            return Err(ConfigError::BadValue {
                key: "occupancy_pmf".into(),
                value: format!("{list:?}"),
                expected: "exactly 5 probabilities".into(),
            });
        }
        pmf.copy_from_slice(&list);
    }
    let mean = kv.get_f64("per_person_mean_kg")?.unwrap_or(mass.per_person_mean_kg());
    let sigma = kv.get_f64("sigma_coeff")?.unwrap_or(mass.sigma_coeff());
    *mass = MassModel::new(pmf, mean, sigma).map_err(|e| ConfigError::Invalid(e.to_string()))?;

    let w = aux.params_for(crate::trip::Season::Winter);
    let s = aux.params_for(crate::trip::Season::Summer);
    let winter = GammaParams {
        shape: kv.get_f64("winter_shape")?.unwrap_or(w.shape),
        scale: kv.get_f64("winter_scale")?.unwrap_or(w.scale),
    };
    let summer = GammaParams {
        shape: kv.get_f64("summer_shape")?.unwrap_or(s.shape),
        scale: kv.get_f64("summer_scale")?.unwrap_or(s.scale),
    };
    *aux = AuxPowerModel::new(winter, summer).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok(())
}

/// Resolved application configuration for the CLI commands.
///
/// Everything has a default; a config file overrides fields selectively and
/// command-line flags override the file.
#[derive(Debug, Clone)]
pub struct AppConfig {
    pub ev: EvParams,
    pub mass: MassModel,
    pub aux: AuxPowerModel,
    pub p1: Option<f64>,
    pub x_u_min_kwh: f64,
    /// Defaults to the battery capacity when absent.
    pub x_u_max_kwh: Option<f64>,
    pub thresholds: DecisionThresholds,
    pub bin_width_kwh: f64,
    pub samples: usize,
    pub seed: u64,
    pub lambda: f64,
    pub month_map: MonthMap,
    pub driver_state_path: Option<String>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            ev: EvParams::kia_soul_ev_2020(),
            mass: MassModel::default(),
            aux: AuxPowerModel::default(),
            p1: None,
            x_u_min_kwh: 0.0,
            x_u_max_kwh: None,
            thresholds: DecisionThresholds::default(),
            bin_width_kwh: 0.1,
            samples: 10_000,
            seed: 0,
            lambda: 1.0,
            month_map: MonthMap::default(),
            driver_state_path: None,
        }
    }
}

impl AppConfig {
    pub fn from_kv(kv: &KvMap, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = AppConfig::default();
        if let Some(path) = kv.get("ev_params_path") {
            let resolved = resolve_path(path, base_dir);
            cfg.ev = EvParams::load(&resolved).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        apply_model_overrides(kv, &mut cfg.mass, &mut cfg.aux)?;
        if let Some(p1) = kv.get_f64("p1")? {
            cfg.p1 = Some(p1);
        }
        cfg.x_u_min_kwh = kv.get_f64("x_u_min_kwh")?.unwrap_or(cfg.x_u_min_kwh);
        if let Some(max) = kv.get_f64("x_u_max_kwh")? {
            cfg.x_u_max_kwh = Some(max);
        }
        let h0_max = kv.get_f64("h0_max")?.unwrap_or(cfg.thresholds.h0_max);
        let h1_min = kv.get_f64("h1_min")?.unwrap_or(cfg.thresholds.h1_min);
        cfg.thresholds = DecisionThresholds::new(h0_max, h1_min)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.bin_width_kwh = kv.get_f64("bin_width_kwh")?.unwrap_or(cfg.bin_width_kwh);
        cfg.samples = kv.get_usize("samples")?.unwrap_or(cfg.samples);
        cfg.seed = kv.get_u64("seed")?.unwrap_or(cfg.seed);
        cfg.lambda = kv.get_f64("lambda")?.unwrap_or(cfg.lambda);
        if let Some(months) = kv.get_u32_list("winter_months")? {
            cfg.month_map = MonthMap::from_winter_months(&months).map_err(ConfigError::Invalid)?;
        }
        if let Some(path) = kv.get("driver_state_path") {
            cfg.driver_state_path = Some(resolve_path(path, base_dir));
        }
        Ok(cfg)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, ConfigError> {
        let kv = KvMap::load(&path)?;
        Self::from_kv(&kv, path.as_ref().parent())
    }

    /// Effective upper end of the undeclared-energy slab.
    pub fn x_u_max_effective(&self) -> f64 {
        self.x_u_max_kwh.unwrap_or(self.ev.e_max_kwh)
    }
}

fn resolve_path(path: &str, base_dir: Option<&Path>) -> String {
    let p = Path::new(path);
    if p.is_absolute() {
        return path.to_string();
    }
    match base_dir {
        Some(dir) => dir.join(p).display().to_string(),
        None => path.to_string(),
    }
}

/// Per-driver record carried between certified charging events.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverState {
    pub p1: f64,
    pub last_certified_soc_kwh: f64,
    pub last_certified_timestamp: DateTime<Utc>,
}

/// Flat key-value store of driver states, rewritten atomically on update.
///
/// Keys are `<driver_id>.p1`, `<driver_id>.last_certified_soc_kwh`, and
/// `<driver_id>.last_certified_timestamp`.
#[derive(Debug, Clone, Default)]
pub struct DriverStateFile {
    drivers: BTreeMap<String, DriverState>,
}

impl DriverStateFile {
    /// Loads the file; a missing file is an empty store.
    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        if !path.exists() {
            return Ok(DriverStateFile::default());
        }
        let kv = KvMap::load(path)?;
        let mut drivers: BTreeMap<String, DriverState> = BTreeMap::new();
        let mut ids: Vec<String> = Vec::new();
        for key in kv.keys() {
            if let Some(id) = key.strip_suffix(".p1") {
                ids.push(id.to_string());
            }
        }
        for id in ids {
            let p1 = kv.require_f64(&format!("{id}.p1"))?;
            let soc = kv.require_f64(&format!("{id}.last_certified_soc_kwh"))?;
            let ts_key = format!("{id}.last_certified_timestamp");
            let ts_raw = kv
                .get(&ts_key)
                .ok_or_else(|| ConfigError::MissingKey(ts_key.clone()))?;
            let ts = DateTime::parse_from_rfc3339(ts_raw)
                .map_err(|e| ConfigError::BadValue {
                    key: ts_key,
                    value: ts_raw.to_string(),
                    expected: format!("an RFC 3339 timestamp ({e})"),
                })?
                .with_timezone(&Utc);
            drivers.insert(
                id,
                DriverState {
                    p1,
                    last_certified_soc_kwh: soc,
                    last_certified_timestamp: ts,
                },
            );
        }
        Ok(DriverStateFile { drivers })
    }

    pub fn get(&self, driver_id: &str) -> Option<&DriverState> {
        self.drivers.get(driver_id)
    }

    pub fn set(&mut self, driver_id: &str, state: DriverState) {
        self.drivers.insert(driver_id.to_string(), state);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (id, s) in &self.drivers {
            writeln!(out, "{id}.p1 = {}", s.p1).unwrap();
            writeln!(out, "{id}.last_certified_soc_kwh = {}", s.last_certified_soc_kwh).unwrap();
            writeln!(
                out,
                "{id}.last_certified_timestamp = {}",
                s.last_certified_timestamp.format("%Y-%m-%dT%H:%M:%SZ")
            )
            .unwrap();
        }
        out
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), ConfigError> {
        write_atomic(path.as_ref(), self.render().as_bytes()).map_err(|e| ConfigError::Io {
            path: path.as_ref().display().to_string(),
            source: e,
        })
    }
}

/// Writes via a temporary file in the target directory and renames into
/// place, so readers never observe partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
