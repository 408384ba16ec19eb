//! Sensor-level event-triggered filter.
//!
//! Each raw measurement is compared against an acceptance band centred on the
//! sliding average of the previous `n` measurements. Values strictly inside
//! the band are suppressed; values on or beyond either edge are transmitted.
//! The first `n` samples are always transmitted while the window fills.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_BAND: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("window length must be at least 1 (got {0})")]
    InvalidWindow(usize),
    #[error("band span must be a finite non-negative fraction (got {0})")]
    InvalidBand(f64),
    #[error("sliding average expects exactly {expected} values, got {actual}")]
    WindowLength { expected: usize, actual: usize },
    #[error("sample timestamp {got} does not follow previous timestamp {previous}")]
    OutOfOrder { previous: f64, got: f64 },
}

/// Filter parameters: window length `n` and band span `p` (a fraction).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub n: usize,
    pub p: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { n: DEFAULT_WINDOW, p: DEFAULT_BAND }
    }
}

impl FilterConfig {
    pub fn new(n: usize, p: f64) -> Result<Self, FilterError> {
        let config = Self { n, p };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        if self.n < 1 {
            return Err(FilterError::InvalidWindow(self.n));
        }
        if !(self.p >= 0.0 && self.p.is_finite()) {
            return Err(FilterError::InvalidBand(self.p));
        }
        Ok(())
    }
}

/// One timestamped measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub timestamp: f64,
    pub value: f64,
}

impl Sample {
    pub fn new(timestamp: f64, value: f64) -> Self {
        Self { timestamp, value }
    }
}

/// Acceptance band around the sliding average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub avg: f64,
    pub hi: f64,
    pub lo: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Warmup,
    Event,
    Suppressed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransmitDecision {
    pub transmit: bool,
    pub reason: Reason,
}

impl TransmitDecision {
    pub fn from_reason(reason: Reason) -> Self {
        Self { transmit: reason != Reason::Suppressed, reason }
    }
}

/// Arithmetic mean of a window that must hold exactly `n` values.
pub fn sliding_average(window: &[f64], n: usize) -> Result<f64, FilterError> {
    if n == 0 {
        return Err(FilterError::InvalidWindow(n));
    }
    if window.len() != n {
        return Err(FilterError::WindowLength { expected: n, actual: window.len() });
    }
    Ok(window.iter().sum::<f64>() / n as f64)
}

/// Band of half-width `p * |avg|` centred on `avg`.
///
/// Using the magnitude keeps `lo <= hi` for negative averages; for positive
/// averages this is exactly `avg ± p * avg`.
pub fn compute_thresholds(avg: f64, p: f64) -> Band {
    let half = p * avg.abs();
    Band { avg, hi: avg + half, lo: avg - half }
}

/// `true` when `v` lies on or outside the band edges, i.e. is an event.
pub fn classify(v: f64, band: &Band) -> bool {
    !(band.lo < v && v < band.hi)
}

/// Streaming filter state for a single sensor.
#[derive(Debug, Clone)]
pub struct FilterState {
    config: FilterConfig,
    window: VecDeque<f64>,
    band: Option<Band>,
    seen: u64,
    last_timestamp: Option<f64>,
}

impl FilterState {
    pub fn new(config: FilterConfig) -> Result<Self, FilterError> {
        config.validate()?;
        Ok(Self { config, window: VecDeque::with_capacity(config.n), band: None, seen: 0, last_timestamp: None })
    }

    /// Returns the state to its freshly constructed form, keeping the config.
    pub fn reset(&mut self) {
        self.window.clear();
        self.band = None;
        self.seen = 0;
        self.last_timestamp = None;
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Raw values currently in the window, oldest first.
    pub fn window(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    /// Current band, `None` until the window has filled.
    pub fn band(&self) -> Option<Band> {
        self.band
    }

    /// Classifies `sample` against the band built from the previous `n`
    /// values, then pushes the raw value into the window whatever the outcome.
    pub fn step(&mut self, sample: Sample) -> Result<TransmitDecision, FilterError> {
        if let Some(previous) = self.last_timestamp {
            // NaN timestamps are rejected too
            if sample.timestamp.partial_cmp(&previous) != Some(std::cmp::Ordering::Greater) {
                return Err(FilterError::OutOfOrder { previous, got: sample.timestamp });
            }
        }

        let reason = match self.band {
            None => Reason::Warmup,
            Some(band) if classify(sample.value, &band) => Reason::Event,
            Some(_) => Reason::Suppressed,
        };

        self.window.push_back(sample.value);
        if self.window.len() > self.config.n {
            self.window.pop_front();
        }
        if self.window.len() == self.config.n {
            // Full recompute keeps the average bit-identical to a fresh
            // evaluation over the same values; n is small.
            let avg = self.window.iter().sum::<f64>() / self.config.n as f64;
            self.band = Some(compute_thresholds(avg, self.config.p));
        }
        self.seen += 1;
        self.last_timestamp = Some(sample.timestamp);

        Ok(TransmitDecision::from_reason(reason))
    }
}

/// Outcome of pushing a whole stream through a fresh filter.
#[derive(Debug, Clone, Default)]
pub struct FilterRun {
    pub decisions: Vec<TransmitDecision>,
    pub log: Vec<Sample>,
}

impl FilterRun {
    pub fn transmitted(&self) -> usize {
        self.log.len()
    }
}

pub fn filter_stream(config: FilterConfig, samples: &[Sample]) -> Result<FilterRun, FilterError> {
    let mut state = FilterState::new(config)?;
    let mut run = FilterRun { decisions: Vec::with_capacity(samples.len()), log: Vec::new() };
    for &sample in samples {
        let decision = state.step(sample)?;
        if decision.transmit {
            run.log.push(sample);
        }
        run.decisions.push(decision);
    }
    Ok(run)
}
