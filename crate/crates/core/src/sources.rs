//! Sample stream producers: seeded normal generators and CSV replay.
//!
//! # Generation recipe
//!
//! Synthetic streams are meant to be reproducible from any language, so the
//! generator is fixed rather than delegated to a library:
//!
//! 1. SplitMix64 seeded with the 64-bit seed. Each call adds
//!    `0x9E3779B97F4A7C15` to the state (wrapping) and returns
//!    `z ^ (z >> 31)` after `z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9` and
//!    `z = (z ^ (z >> 27)) * 0x94D049BB133111EB`.
//! 2. A uniform double is `(x >> 11) * 2^-53`, in `[0, 1)`.
//! 3. Box-Muller on two consecutive uniforms `a`, `b`:
//!    `r = sqrt(-2 ln(1 - a))`, `z0 = r cos(2 pi b)`, `z1 = r sin(2 pi b)`.
//!    `z0` is used first, then `z1`, then a fresh pair is drawn.
//! 4. Value `k` is `mean + stddev * z_k`, at timestamp `k * period`.

use std::f64::consts::PI;
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::Sample;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error("stddev must be finite and non-negative (got {0})")]
    InvalidStddev(f64),
    #[error("period must be finite and positive (got {0})")]
    InvalidPeriod(f64),
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot read header of {path}: {source}")]
    Header {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("column '{column}' not found in {path} (header: {header})")]
    MissingColumn { path: PathBuf, column: String, header: String },
    #[error("{path} has an empty header")]
    EmptyHeader { path: PathBuf },
    #[error("delimiter must be a single ASCII character (got {0:?})")]
    InvalidDelimiter(String),
}

/// SplitMix64 generator.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Standard normal draws via Box-Muller over [`SplitMix64`].
#[derive(Debug, Clone)]
pub struct NormalStream {
    rng: SplitMix64,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self { rng: SplitMix64::new(seed), spare: None }
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let a = self.rng.next_f64();
        let b = self.rng.next_f64();
        let r = (-2.0 * (1.0 - a).ln()).sqrt();
        let theta = 2.0 * PI * b;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Synthetic normally distributed sensor. `period` is in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub device: String,
    pub mean: f64,
    pub stddev: f64,
    pub period: f64,
    pub count: usize,
    pub seed: u64,
}

impl SensorSpec {
    pub fn validate(&self) -> Result<(), SourceError> {
        if !(self.stddev >= 0.0 && self.stddev.is_finite()) {
            return Err(SourceError::InvalidStddev(self.stddev));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(SourceError::InvalidPeriod(self.period));
        }
        Ok(())
    }
}

pub fn gen_normal(spec: &SensorSpec, count: usize) -> Result<Vec<Sample>, SourceError> {
    spec.validate()?;
    let mut normal = NormalStream::new(spec.seed);
    Ok((0..count)
        .map(|k| Sample::new(k as f64 * spec.period, spec.mean + spec.stddev * normal.next_standard()))
        .collect())
}

/// Default sample period for synthetic sensors, in milliseconds.
pub const DEFAULT_PERIOD_MS: f64 = 1000.0;

/// The six reference sensors S1..S6, seeded `seed_base + index`.
pub fn table2_defaults(seed_base: u64, count: usize) -> Vec<SensorSpec> {
    [(25.0, 4.0), (29.0, 8.0), (24.0, 2.0), (20.0, 6.0), (28.0, 1.0), (22.0, 6.0)]
        .into_iter()
        .enumerate()
        .map(|(i, (mean, stddev))| SensorSpec {
            device: format!("S{}", i + 1),
            mean,
            stddev,
            period: DEFAULT_PERIOD_MS,
            count,
            seed: seed_base.wrapping_add(i as u64),
        })
        .collect()
}

fn default_delimiter() -> String {
    ",".to_string()
}

fn default_expected_period() -> f64 {
    60.0
}

/// CSV replay source. Timestamps are converted to seconds (epoch seconds for
/// ISO-8601 values, which are read as UTC when no offset is given).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySpec {
    pub device: String,
    pub path: PathBuf,
    pub value_column: String,
    /// Defaults to the first header column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_column: Option<String>,
    /// Seconds between rows; larger steps are counted as gaps.
    #[serde(default = "default_expected_period")]
    pub expected_period: f64,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
}

impl ReplaySpec {
    pub fn new(device: impl Into<String>, path: impl Into<PathBuf>, value_column: impl Into<String>) -> Self {
        Self {
            device: device.into(),
            path: path.into(),
            value_column: value_column.into(),
            timestamp_column: None,
            expected_period: default_expected_period(),
            delimiter: default_delimiter(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub samples: usize,
    pub skipped: usize,
    pub skipped_unparsable: usize,
    pub skipped_out_of_order: usize,
    pub gaps: usize,
    pub missing_points: usize,
}

/// Parses ISO-8601 first, then falls back to epoch seconds.
pub fn parse_timestamp(text: &str) -> Option<f64> {
    let text = text.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        return Some(dt.timestamp_micros() as f64 / 1e6);
    }
    const NAIVE: [&str; 4] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];
    for fmt in NAIVE {
        if let Ok(dt) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(dt.and_utc().timestamp_micros() as f64 / 1e6);
        }
    }
    text.parse::<f64>().ok().filter(|t| t.is_finite())
}

fn resolve(path: &Path, base: Option<&Path>) -> PathBuf {
    match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    }
}

/// Loads one column of a CSV file. Rows with an unparsable value or
/// timestamp, or a timestamp not after the previous kept row, are skipped
/// and counted. Relative paths are resolved against `base` when given.
pub fn load_csv(spec: &ReplaySpec, base: Option<&Path>) -> Result<(Vec<Sample>, IngestReport), SourceError> {
    let path = resolve(&spec.path, base);
    let delimiter = match spec.delimiter.as_bytes() {
        [b] => *b,
        _ => return Err(SourceError::InvalidDelimiter(spec.delimiter.clone())),
    };
    let file = File::open(&path).map_err(|source| SourceError::Open { path: path.clone(), source })?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header = reader.headers().map_err(|source| SourceError::Header { path: path.clone(), source })?.clone();
    if header.is_empty() {
        return Err(SourceError::EmptyHeader { path });
    }
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| SourceError::MissingColumn {
            path: path.clone(),
            column: name.to_string(),
            header: header.iter().collect::<Vec<_>>().join(","),
        })
    };
    let value_idx = find(&spec.value_column)?;
    let ts_idx = match &spec.timestamp_column {
        Some(name) => find(name)?,
        None => 0,
    };

    let mut samples: Vec<Sample> = Vec::new();
    let mut report = IngestReport::default();
    for record in reader.records() {
        report.rows_read += 1;
        let parsed = record.ok().and_then(|r| {
            let ts = parse_timestamp(r.get(ts_idx)?)?;
            let value = r.get(value_idx)?.parse::<f64>().ok().filter(|v| v.is_finite())?;
            Some(Sample::new(ts, value))
        });
        let Some(sample) = parsed else {
            report.skipped_unparsable += 1;
            continue;
        };
        if let Some(prev) = samples.last() {
            if sample.timestamp <= prev.timestamp {
                report.skipped_out_of_order += 1;
                continue;
            }
            let delta = sample.timestamp - prev.timestamp;
            if spec.expected_period > 0.0 && delta > 1.5 * spec.expected_period {
                report.gaps += 1;
                report.missing_points += ((delta / spec.expected_period).round() as usize).saturating_sub(1);
            }
        }
        samples.push(sample);
    }
    report.samples = samples.len();
    report.skipped = report.skipped_unparsable + report.skipped_out_of_order;
    Ok((samples, report))
}
