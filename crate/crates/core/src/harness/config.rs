//! Sweep configuration documents.
//!
//! ```toml
//! [channel]
//! n_rx = 64
//! n_users = 32
//! rho = 0.6
//!
//! [modulation]
//! order = 16
//!
//! [langevin]          # every key optional
//! epsilon = 3e-5
//! steps_per_level = 70
//! n_levels = 20
//! sigma_first = 1.0
//! sigma_last = 0.01
//! n_trajectories = 40
//! step_rule = "sigma_last"   # or "sigma_last_squared"
//!
//! [sweep]
//! snr_db_list = [10.0, 12.0, 14.0]
//! detectors = ["langevin", "mmse", "zf"]
//! n_trials = 5000
//! master_seed = 1
//! output_path = "ser.csv"   # optional
//! record_wall_time = true   # optional
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::baselines::ml_tractable;
use crate::channel::ChannelParams;
use crate::constellation::Constellation;
use crate::detector::{AnnealingSchedule, LangevinConfig, StepRule};
use crate::error::Error;

/// Detector identifiers accepted in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorKind {
    Langevin,
    Mmse,
    Zf,
    Ml,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 4] = [DetectorKind::Langevin, DetectorKind::Mmse, DetectorKind::Zf, DetectorKind::Ml];

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::Langevin => "langevin",
            DetectorKind::Mmse => "mmse",
            DetectorKind::Zf => "zf",
            DetectorKind::Ml => "ml",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DetectorKind::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim())
            .ok_or_else(|| ConfigError::new("sweep.detectors", format!("unknown detector `{s}` (expected langevin, mmse, zf or ml)")))
    }
}

/// Invalid or malformed sweep configuration.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid config key `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }

    fn from_core(section: &str, err: Error) -> Self {
        match err {
            Error::InvalidParameter { name, reason } => Self::new(format!("{section}.{name}"), reason),
            other => Self::new(section, other.to_string()),
        }
    }
}

/// Fully validated sweep settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub channel: ChannelParams,
    pub modulation_order: usize,
    pub snr_db_list: Vec<f64>,
    pub detectors: Vec<DetectorKind>,
    pub langevin: LangevinConfig,
    /// Transmitted vectors per SNR point.
    pub n_trials: usize,
    pub master_seed: u64,
    pub output_path: Option<PathBuf>,
    /// When false the `wall_time_s` column is written as zero, making the
    /// CSV a pure function of the configuration.
    pub record_wall_time: bool,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.channel.validate().map_err(|e| ConfigError::from_core("channel", e))?;
        Constellation::qam(self.modulation_order).map_err(|e| ConfigError::new("modulation.order", e.to_string()))?;
        if self.snr_db_list.is_empty() {
            return Err(ConfigError::new("sweep.snr_db_list", "must not be empty"));
        }
        if let Some(s) = self.snr_db_list.iter().find(|s| !s.is_finite()) {
            return Err(ConfigError::new("sweep.snr_db_list", format!("{s} is not finite")));
        }
        if self.detectors.is_empty() {
            return Err(ConfigError::new("sweep.detectors", "must not be empty"));
        }
        if self.n_trials == 0 {
            return Err(ConfigError::new("sweep.n_trials", "must be at least 1"));
        }
        if self.detectors.contains(&DetectorKind::Ml) {
            ml_tractable(self.modulation_order, self.channel.n_users)
                .map_err(|e| ConfigError::new("sweep.detectors", format!("ml detector is intractable: {e}")))?;
        }
        if self.detectors.contains(&DetectorKind::Langevin) {
            self.langevin.validate().map_err(|e| ConfigError::from_core("langevin", e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    channel: RawChannel,
    modulation: RawModulation,
    #[serde(default)]
    langevin: RawLangevin,
    sweep: RawSweep,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChannel {
    n_rx: usize,
    n_users: usize,
    rho: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModulation {
    order: usize,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLangevin {
    epsilon: Option<f64>,
    steps_per_level: Option<usize>,
    n_levels: Option<usize>,
    sigma_first: Option<f64>,
    sigma_last: Option<f64>,
    n_trajectories: Option<usize>,
    step_rule: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    snr_db_list: Vec<f64>,
    detectors: Vec<String>,
    n_trials: usize,
    #[serde(default)]
    master_seed: u64,
    output_path: Option<PathBuf>,
    #[serde(default = "default_true")]
    record_wall_time: bool,
}

fn default_true() -> bool {
    true
}

/// Parses and validates a sweep configuration document, filling omitted
/// sampler settings with defaults.
pub fn parse_config(text: &str) -> Result<SweepConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let key = msg
            .split('`')
            .nth(1)
            .map(str::to_string)
            .unwrap_or_else(|| "document".to_string());
        ConfigError::new(key, e.to_string().trim().replace('\n', " "))
    })?;

    let l = raw.langevin;
    let schedule = AnnealingSchedule::geometric(
        l.sigma_first.unwrap_or(LangevinConfig::DEFAULT_SIGMA_FIRST),
        l.sigma_last.unwrap_or(LangevinConfig::DEFAULT_SIGMA_LAST),
        l.n_levels.unwrap_or(LangevinConfig::DEFAULT_LEVELS),
    )
    .map_err(|e| ConfigError::from_core("langevin", e))?;
    let langevin = LangevinConfig {
        epsilon: l.epsilon.unwrap_or(LangevinConfig::DEFAULT_EPSILON),
        steps_per_level: l.steps_per_level.unwrap_or(LangevinConfig::DEFAULT_STEPS_PER_LEVEL),
        schedule,
        n_trajectories: l.n_trajectories.unwrap_or(LangevinConfig::DEFAULT_TRAJECTORIES),
        step_rule: match l.step_rule {
            Some(r) => r.parse().map_err(|e| ConfigError::from_core("langevin", e))?,
            None => StepRule::default(),
        },
        seed: 0,
    };

    let detectors = raw
        .sweep
        .detectors
        .iter()
        .map(|d| d.parse())
        .collect::<Result<Vec<DetectorKind>, _>>()?;

    let config = SweepConfig {
        channel: ChannelParams {
            n_rx: raw.channel.n_rx,
            n_users: raw.channel.n_users,
            rho: raw.channel.rho,
        },
        modulation_order: raw.modulation.order,
        snr_db_list: raw.sweep.snr_db_list,
        detectors,
        langevin,
        n_trials: raw.sweep.n_trials,
        master_seed: raw.sweep.master_seed,
        output_path: raw.sweep.output_path,
        record_wall_time: raw.sweep.record_wall_time,
    };
    config.validate()?;
    Ok(config)
}

/// Parses a comma-separated detector list such as `"langevin,mmse"`.
pub fn parse_detector_list(list: &str) -> Result<Vec<DetectorKind>, ConfigError> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}
