//! Flat `key = value` run configuration.
//!
//! Lines hold one `key = value` pair; `#` starts a comment. Angles are in
//! radians unless the key carries a `_deg` suffix. Every key also exists as a
//! command-line flag (lower-case, `_` replaced by `-`), and flags override
//! file values.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::analysis::{AnalysisOptions, ChiMode};
use crate::counting::{BeamConfig, BeamProfile};
use crate::optics::Path;
use crate::protocol::{AbsorberSpec, ProtocolConfig};

/// Where a configuration value came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag(String),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(n) => write!(f, "line {n}"),
            Origin::Flag(name) => write!(f, "flag --{name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config {origin}: {message}")]
pub struct ConfigError {
    pub origin: Origin,
    pub message: String,
}

impl ConfigError {
    fn new(origin: &Origin, message: impl Into<String>) -> Self {
        Self {
            origin: origin.clone(),
            message: message.into(),
        }
    }
}

/// Every accepted key with a short description.
pub const KEYS: &[(&str, &str)] = &[
    ("theta_A", "first-plate mixing angle [rad]"),
    ("theta_A_deg", "first-plate mixing angle [deg]"),
    ("theta_B", "last-plate mixing angle [rad]"),
    ("theta_B_deg", "last-plate mixing angle [deg]"),
    ("chi", "phase shifter setting [rad]"),
    ("chi_deg", "phase shifter setting [deg]"),
    ("absorber_T", "absorber intensity transmission; omit for no absorber"),
    ("absorber_path", "path carrying the absorber: plus | minus"),
    ("visibility", "interferometer contrast V in [0, 1]"),
    ("h_offset", "phase-independent rate at H as a fraction of flux"),
    ("flux_rate", "detected neutrons per second at full transmission"),
    ("interferogram_s", "measurement time per phase setting [s]"),
    ("transversal_s", "measurement time per detector position [s]"),
    ("blocker_s", "measurement time per blocker setting [s]"),
    ("detector_efficiency", "detector efficiency in (0, 1]"),
    ("seed", "master random seed"),
    ("chi_min", "interferogram scan start [rad]"),
    ("chi_min_deg", "interferogram scan start [deg]"),
    ("chi_max", "interferogram scan end [rad]"),
    ("chi_max_deg", "interferogram scan end [deg]"),
    ("chi_points", "interferogram scan points (inclusive endpoints)"),
    ("pos_min_mm", "transversal scan start [mm]"),
    ("pos_max_mm", "transversal scan end [mm]"),
    ("pos_points", "transversal scan points"),
    ("center_plus_mm", "transverse center of path 2+ [mm]"),
    ("center_minus_mm", "transverse center of path 2- [mm]"),
    ("beam_width_mm", "Gaussian beam width (standard deviation) [mm]"),
    ("sweep_theta_points", "theta_A points in [0, π] for the sweep"),
    ("sweep_chi_points", "chi points in [-π, π] for the sweep"),
    ("relabel", "swap the O/H sign assignment in region 3: true | false"),
    ("chi_mode", "C31 operating point: nearest-fit | fit-model | max-k"),
    ("input_dir", "directory holding count CSVs for analyze"),
    ("output_dir", "directory receiving output files"),
];

pub fn flag_name(key: &str) -> String {
    key.to_lowercase().replace('_', "-")
}

fn canonical(key: &str) -> &str {
    key.strip_suffix("_deg").unwrap_or(key)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub chi_min: f64,
    pub chi_max: f64,
    pub chi_points: usize,
    pub pos_min_mm: f64,
    pub pos_max_mm: f64,
    pub pos_points: usize,
    pub profile: BeamProfile,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            chi_min: -PI,
            chi_max: PI,
            chi_points: 25,
            pos_min_mm: -10.0,
            pos_max_mm: 10.0,
            pos_points: 81,
            profile: BeamProfile::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepConfig {
    pub theta_points: usize,
    pub chi_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            theta_points: 101,
            chi_points: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub protocol: ProtocolConfig,
    pub beam: BeamConfig,
    pub scan: ScanConfig,
    pub sweep: SweepConfig,
    pub relabel: bool,
    pub chi_mode: ChiMode,
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            protocol: ProtocolConfig::default(),
            beam: BeamConfig::default(),
            scan: ScanConfig::default(),
            sweep: SweepConfig::default(),
            relabel: false,
            chi_mode: ChiMode::NearestFit,
            input_dir: PathBuf::from("lgi-out"),
            output_dir: PathBuf::from("lgi-out"),
        }
    }
}

impl RunConfig {
    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            relabel: self.relabel,
            chi_mode: self.chi_mode,
            profile: self.scan.profile,
        }
    }

    /// Builds a config from file entries, then flag entries on top.
    pub fn from_sources(file: Vec<Entry>, flags: Vec<Entry>) -> Result<Self, ConfigError> {
        let mut merged: HashMap<String, Entry> = HashMap::new();
        let mut order: Vec<String> = Vec::new();
        for entry in file {
            let key = canonical(&entry.key).to_string();
            if let Some(prev) = merged.get(&key) {
                return Err(ConfigError::new(
                    &entry.origin,
                    format!("`{}` already set at {}", entry.key, prev.origin),
                ));
            }
            order.push(key.clone());
            merged.insert(key, entry);
        }
        for entry in flags {
            let key = canonical(&entry.key).to_string();
            if merged.insert(key.clone(), entry).is_none() {
                order.push(key);
            }
        }

        let mut config = RunConfig::default();
        let mut absorber_t = None;
        let mut absorber_path = (Path::Minus, None);
        let mut last_origin = HashMap::new();
        for key in &order {
            let entry = &merged[key];
            last_origin.insert(key.as_str(), entry.origin.clone());
            config.apply(entry, &mut absorber_t, &mut absorber_path)?;
        }
        if let Some(t) = absorber_t {
            config.protocol.absorber = Some(AbsorberSpec {
                transmission: t,
                path: absorber_path.0,
            });
        } else if let Some(origin) = absorber_path.1 {
            return Err(ConfigError::new(&origin, "absorber_path given without absorber_T"));
        }
        config.cross_check(&last_origin)?;
        Ok(config)
    }

    fn apply(
        &mut self,
        entry: &Entry,
        absorber_t: &mut Option<f64>,
        absorber_path: &mut (Path, Option<Origin>),
    ) -> Result<(), ConfigError> {
        let o = &entry.origin;
        let v = entry.value.as_str();
        let angle = |lo: f64, hi: f64| -> Result<f64, ConfigError> {
            let x = number(o, v)?;
            let x = if entry.key.ends_with("_deg") { x.to_radians() } else { x };
            in_range(o, &entry.key, x, lo, hi)
        };
        match canonical(&entry.key) {
            "theta_A" => self.protocol.theta_a = angle(0.0, PI)?,
            "theta_B" => self.protocol.theta_b = angle(0.0, PI)?,
            "chi" => self.protocol.chi = angle(f64::MIN, f64::MAX)?,
            "absorber_T" => *absorber_t = Some(in_range(o, &entry.key, number(o, v)?, 0.0, 1.0)?),
            "absorber_path" => {
                let path = match v {
                    "plus" | "+" => Path::Plus,
                    "minus" | "-" => Path::Minus,
                    _ => return Err(ConfigError::new(o, format!("absorber_path must be plus or minus, got `{v}`"))),
                };
                *absorber_path = (path, Some(o.clone()));
            }
            "visibility" => self.protocol.visibility = in_range(o, &entry.key, number(o, v)?, 0.0, 1.0)?,
            "h_offset" => self.protocol.h_offset = in_range(o, &entry.key, number(o, v)?, 0.0, f64::MAX)?,
            "flux_rate" => self.beam.flux_rate = positive(o, &entry.key, v)?,
            "interferogram_s" => self.beam.times.interferogram_s = positive(o, &entry.key, v)?,
            "transversal_s" => self.beam.times.transversal_s = positive(o, &entry.key, v)?,
            "blocker_s" => self.beam.times.blocker_s = positive(o, &entry.key, v)?,
            "detector_efficiency" => {
                let e = positive(o, &entry.key, v)?;
                self.beam.detector_efficiency = in_range(o, &entry.key, e, 0.0, 1.0)?;
            }
            "seed" => self.beam.seed = integer(o, v)?,
            "chi_min" => self.scan.chi_min = angle(f64::MIN, f64::MAX)?,
            "chi_max" => self.scan.chi_max = angle(f64::MIN, f64::MAX)?,
            "chi_points" => self.scan.chi_points = count(o, &entry.key, v, 5)?,
            "pos_min_mm" => self.scan.pos_min_mm = number(o, v)?,
            "pos_max_mm" => self.scan.pos_max_mm = number(o, v)?,
            "pos_points" => self.scan.pos_points = count(o, &entry.key, v, 10)?,
            "center_plus_mm" => self.scan.profile.center_plus_mm = number(o, v)?,
            "center_minus_mm" => self.scan.profile.center_minus_mm = number(o, v)?,
            "beam_width_mm" => self.scan.profile.width_mm = positive(o, &entry.key, v)?,
            "sweep_theta_points" => self.sweep.theta_points = count(o, &entry.key, v, 1)?,
            "sweep_chi_points" => self.sweep.chi_points = count(o, &entry.key, v, 1)?,
            "relabel" => {
                self.relabel = match v {
                    "true" | "yes" | "1" => true,
                    "false" | "no" | "0" => false,
                    _ => return Err(ConfigError::new(o, format!("relabel must be true or false, got `{v}`"))),
                }
            }
            "chi_mode" => self.chi_mode = v.parse().map_err(|e: String| ConfigError::new(o, e))?,
            "input_dir" => self.input_dir = PathBuf::from(v),
            "output_dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(ConfigError::new(o, format!("unknown key `{}`", entry.key))),
        }
        Ok(())
    }

    fn cross_check(&self, origins: &HashMap<&str, Origin>) -> Result<(), ConfigError> {
        let at = |key: &str| origins.get(key).cloned().unwrap_or(Origin::Line(0));
        if self.scan.chi_max - self.scan.chi_min < PI {
            return Err(ConfigError::new(
                &at("chi_max"),
                "interferogram scan must span at least π (chi_max − chi_min)",
            ));
        }
        if self.scan.pos_max_mm <= self.scan.pos_min_mm {
            return Err(ConfigError::new(&at("pos_max_mm"), "pos_max_mm must exceed pos_min_mm"));
        }
        if self.scan.profile.center_plus_mm == self.scan.profile.center_minus_mm {
            return Err(ConfigError::new(
                &at("center_minus_mm"),
                "center_plus_mm and center_minus_mm must differ",
            ));
        }
        Ok(())
    }
}

fn number(o: &Origin, v: &str) -> Result<f64, ConfigError> {
    let x: f64 = v
        .parse()
        .map_err(|_| ConfigError::new(o, format!("`{v}` is not a number")))?;
    if !x.is_finite() {
        return Err(ConfigError::new(o, format!("`{v}` is not finite")));
    }
    Ok(x)
}

fn in_range(o: &Origin, key: &str, x: f64, lo: f64, hi: f64) -> Result<f64, ConfigError> {
    if (lo..=hi).contains(&x) {
        Ok(x)
    } else {
        let range = match (lo == f64::MIN, hi == f64::MAX) {
            (false, true) => format!("[{lo}, ∞)"),
            _ => format!("[{lo}, {hi}]"),
        };
        Err(ConfigError::new(o, format!("{key} = {x} is outside {range}")))
    }
}

fn positive(o: &Origin, key: &str, v: &str) -> Result<f64, ConfigError> {
    let x = number(o, v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(ConfigError::new(o, format!("{key} = {x} must be positive")))
    }
}

fn integer(o: &Origin, v: &str) -> Result<u64, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError::new(o, format!("`{v}` is not a non-negative integer")))
}

fn count(o: &Origin, key: &str, v: &str, min: usize) -> Result<usize, ConfigError> {
    let n = integer(o, v)? as usize;
    if n < min {
        return Err(ConfigError::new(o, format!("{key} = {n} must be at least {min}")));
    }
    Ok(n)
}

/// One `key = value` assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub origin: Origin,
}

impl Entry {
    pub fn flag(key: &str, value: impl Into<String>) -> Self {
        Self {
            key: key.to_string(),
            value: value.into(),
            origin: Origin::Flag(flag_name(key)),
        }
    }
}

fn known_key(key: &str) -> bool {
    KEYS.iter().any(|(k, _)| *k == key)
}

/// Splits config text into entries, rejecting malformed lines and unknown keys.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let origin = Origin::Line(i + 1);
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::new(&origin, format!("expected `key = value`, got `{line}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::new(&origin, format!("expected `key = value`, got `{line}`")));
        }
        if !known_key(key) {
            return Err(ConfigError::new(&origin, format!("unknown key `{key}`")));
        }
        entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            origin,
        });
    }
    Ok(entries)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    RunConfig::from_sources(parse_entries(text)?, Vec::new())
}
