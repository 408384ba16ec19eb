//! Scenario configuration files.
//!
//! Scenarios are TOML documents. Every table rejects unknown keys. See
//! `docs/config.md` for the field-by-field schema.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{FilterConfig, FilterError};
use crate::sim::{EnergyConfig, Mode, SimError, DEFAULT_MESSAGE_SIZE};
use crate::sources::{ReplaySpec, SensorSpec, DEFAULT_PERIOD_MS};
use crate::topology::{Device, Link, Topology, Violations};

/// The bundled reference scenario.
pub const TABLE2_CFG: &str = include_str!("../table2.cfg");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid topology: {0}")]
    Topology(#[from] Violations),
    #[error("invalid filter: {0}")]
    Filter(#[from] FilterError),
    #[error("{0}")]
    Sim(#[from] SimError),
    #[error("{0}")]
    Invalid(String),
}

/// Which runs `simulate` performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Cloud-only baseline and filtered run on identical sources.
    #[default]
    Compare,
    CloudOnly,
    MistFogCloud,
}

impl RunMode {
    pub fn modes(&self) -> Vec<Mode> {
        match self {
            RunMode::Compare => vec![Mode::CloudOnly, Mode::MistFogCloud],
            RunMode::CloudOnly => vec![Mode::CloudOnly],
            RunMode::MistFogCloud => vec![Mode::MistFogCloud],
        }
    }
}

impl std::str::FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "compare" => Ok(RunMode::Compare),
            "cloud_only" => Ok(RunMode::CloudOnly),
            "mist_fog_cloud" => Ok(RunMode::MistFogCloud),
            other => Err(format!("unknown mode '{other}' (expected compare, cloud-only or mist-fog-cloud)")),
        }
    }
}

fn default_message_size() -> u64 {
    DEFAULT_MESSAGE_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Base seed; synthetic sources without an explicit seed use `seed + index`.
    pub seed: u64,
    /// Simulated horizon in milliseconds.
    pub duration: f64,
    #[serde(default = "default_message_size")]
    pub message_size: u64,
    #[serde(default)]
    pub mode: RunMode,
}

/// Extra filter settings evaluated by the `filter` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub n: Vec<usize>,
    pub p: Vec<f64>,
}

fn default_period() -> f64 {
    DEFAULT_PERIOD_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalSource {
    pub device: String,
    pub mean: f64,
    pub stddev: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    pub count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceConfig {
    Normal(NormalSource),
    Csv(ReplaySpec),
}

impl SourceConfig {
    pub fn device(&self) -> &str {
        match self {
            SourceConfig::Normal(s) => &s.device,
            SourceConfig::Csv(s) => &s.device,
        }
    }
}

/// A source with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Normal(SensorSpec),
    Csv(ReplaySpec),
}

impl SourceSpec {
    pub fn device(&self) -> &str {
        match self {
            SourceSpec::Normal(s) => &s.device,
            SourceSpec::Csv(s) => &s.device,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub run: RunSection,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub energy: EnergyConfig,
    #[serde(rename = "device")]
    pub devices: Vec<Device>,
    #[serde(rename = "link", default)]
    pub links: Vec<Link>,
    #[serde(rename = "source", default)]
    pub sources: Vec<SourceConfig>,
}

/// Command-line values that replace file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub n: Option<usize>,
    pub p: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<RunMode>,
    /// Replaces all sources with a single CSV replay.
    pub dataset: Option<PathBuf>,
    pub column: Option<String>,
}

pub const DATASET_DEVICE: &str = "dataset";

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text.trim().is_empty() {
            return Err(ConfigError::Parse("empty document".into()));
        }
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn topology(&self) -> Topology {
        Topology::new(self.devices.clone(), self.links.clone())
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(n) = o.n {
            self.filter.n = n;
        }
        if let Some(p) = o.p {
            self.filter.p = p;
        }
        if let Some(seed) = o.seed {
            self.run.seed = seed;
        }
        if let Some(mode) = o.mode {
            self.run.mode = mode;
        }
        if let Some(path) = &o.dataset {
            let column = o.column.clone().unwrap_or_else(|| "value".to_string());
            self.sources = vec![SourceConfig::Csv(ReplaySpec::new(DATASET_DEVICE, path, column))];
        } else if let Some(column) = &o.column {
            for s in &mut self.sources {
                if let SourceConfig::Csv(r) = s {
                    r.value_column = column.clone();
                }
            }
        }
    }

    /// Makes relative CSV paths absolute against `base`.
    pub fn absolutize(&mut self, base: &Path) {
        for s in &mut self.sources {
            if let SourceConfig::Csv(r) = s {
                if r.path.is_relative() {
                    r.path = base.join(&r.path);
                }
            }
        }
    }

    /// Sources with seeds resolved to `run.seed + index` where not given.
    pub fn source_specs(&self) -> Vec<SourceSpec> {
        self.sources
            .iter()
            .enumerate()
            .map(|(i, s)| match s {
                SourceConfig::Normal(n) => SourceSpec::Normal(SensorSpec {
                    device: n.device.clone(),
                    mean: n.mean,
                    stddev: n.stddev,
                    period: n.period,
                    count: n.count,
                    seed: n.seed.unwrap_or(self.run.seed.wrapping_add(i as u64)),
                }),
                SourceConfig::Csv(r) => SourceSpec::Csv(r.clone()),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.topology().validate()?;
        self.filter.validate()?;
        self.energy.validate()?;
        if !(self.run.duration > 0.0 && self.run.duration.is_finite()) {
            return Err(SimError::InvalidDuration(self.run.duration).into());
        }
        if self.run.message_size == 0 {
            return Err(SimError::InvalidMessageSize.into());
        }
        if let Some(sweep) = &self.sweep {
            if sweep.n.is_empty() || sweep.p.is_empty() {
                return Err(ConfigError::Invalid("sweep lists must not be empty".into()));
            }
            for &n in &sweep.n {
                for &p in &sweep.p {
                    FilterConfig::new(n, p)?;
                }
            }
        }
        let mut seen = BTreeSet::new();
        for s in &self.sources {
            if !seen.insert(s.device()) {
                return Err(SimError::DuplicateSource(s.device().to_string()).into());
            }
            match s {
                SourceConfig::Normal(n) => {
                    if !(n.stddev >= 0.0 && n.stddev.is_finite()) {
                        return Err(ConfigError::Invalid(format!("source '{}': stddev must be >= 0", n.device)));
                    }
                    if !(n.period > 0.0 && n.period.is_finite()) {
                        return Err(ConfigError::Invalid(format!("source '{}': period must be > 0", n.device)));
                    }
                }
                SourceConfig::Csv(r) => {
                    if r.delimiter.len() != 1 {
                        return Err(ConfigError::Invalid(format!(
                            "source '{}': delimiter must be one character",
                            r.device
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// A parsed, validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub topology: Topology,
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let topology = config.topology();
        Ok(Self { config, topology })
    }

    pub fn sources(&self) -> Vec<SourceSpec> {
        self.config.source_specs()
    }
}

/// Parses and validates a scenario document.
pub fn load_config(text: &str) -> Result<Scenario, ConfigError> {
    Scenario::from_config(ScenarioConfig::parse(text)?)
}

/// Reads a scenario from disk, applies overrides, and resolves CSV paths
/// relative to the file's directory. `None` loads the bundled reference
/// scenario with paths relative to the working directory.
pub fn load_scenario(path: Option<&Path>, overrides: &Overrides) -> Result<Scenario, ConfigError> {
    let (text, base) = match path {
        Some(p) => {
            let text =
                std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (text, base)
        }
        None => (TABLE2_CFG.to_string(), PathBuf::new()),
    };
    let mut config = ScenarioConfig::parse(&text)?;
    config.absolutize(&base);
    config.apply(overrides);
    let cwd = std::env::current_dir().unwrap_or_default();
    config.absolutize(&cwd);
    Scenario::from_config(config)
}
