//! Receiver-side reconstruction and reduction/error metrics.
//!
//! Suppressed points are estimated with a zero-order hold of the last
//! transmitted value.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::Sample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("transmission log is empty")]
    EmptyLog,
    #[error("no samples to evaluate")]
    EmptySeries,
    #[error("logged timestamp {0} is not on the raw timeline")]
    UnknownTimestamp(f64),
    #[error("no transmitted value at or before timestamp {0}")]
    NothingHeld(f64),
    #[error("series length mismatch: raw {raw}, reconstructed {reconstructed}")]
    LengthMismatch { raw: usize, reconstructed: usize },
    #[error("transmitted count {transmitted} exceeds total {total}")]
    TooManyTransmitted { transmitted: usize, total: usize },
}

/// Samples actually sent over a run, plus how many raw samples were seen.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransmissionLog {
    pub entries: Vec<Sample>,
    pub total_count: usize,
}

impl TransmissionLog {
    pub fn new(entries: Vec<Sample>, total_count: usize) -> Self {
        Self { entries, total_count }
    }

    pub fn transmitted(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub total_count: usize,
    pub transmitted_count: usize,
    /// Points that never left the sensor.
    pub suppressed_count: usize,
    pub reduction_fraction: f64,
    pub reduction_percent: f64,
    pub avg_error: f64,
    pub max_error: f64,
    /// `100 * avg_error / mean(|raw|)`. Informational only; `None` when the
    /// raw signal has zero mean magnitude.
    pub percent_avg_error: Option<f64>,
}

/// Zero-order hold of `log` onto `timestamps`.
pub fn reconstruct_zoh(log: &[Sample], timestamps: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if log.is_empty() {
        return Err(MetricsError::EmptyLog);
    }
    let mut out = Vec::with_capacity(timestamps.len());
    let mut next = 0;
    let mut held: Option<f64> = None;
    for &t in timestamps {
        while next < log.len() && log[next].timestamp <= t {
            if log[next].timestamp < t {
                // skipped past it without an exact match
                return Err(MetricsError::UnknownTimestamp(log[next].timestamp));
            }
            held = Some(log[next].value);
            next += 1;
        }
        out.push(held.ok_or(MetricsError::NothingHeld(t))?);
    }
    if let Some(s) = log.get(next) {
        return Err(MetricsError::UnknownTimestamp(s.timestamp));
    }
    Ok(out)
}

/// Returns `(suppressed, percent)` where percent is `100 * suppressed / total`.
pub fn reduction_stats(total: usize, transmitted: usize) -> Result<(usize, f64), MetricsError> {
    if total == 0 {
        return Err(MetricsError::EmptySeries);
    }
    if transmitted > total {
        return Err(MetricsError::TooManyTransmitted { transmitted, total });
    }
    let suppressed = total - transmitted;
    Ok((suppressed, 100.0 * suppressed as f64 / total as f64))
}

pub fn error_report(raw: &[f64], reconstructed: &[f64], transmitted_count: usize) -> Result<ErrorReport, MetricsError> {
    if raw.len() != reconstructed.len() {
        return Err(MetricsError::LengthMismatch { raw: raw.len(), reconstructed: reconstructed.len() });
    }
    let total = raw.len();
    let (suppressed, percent) = reduction_stats(total, transmitted_count)?;

    let mut sum_err = 0.0;
    let mut max_err: f64 = 0.0;
    let mut sum_abs = 0.0;
    for (r, x) in raw.iter().zip(reconstructed) {
        let e = (r - x).abs();
        sum_err += e;
        max_err = max_err.max(e);
        sum_abs += r.abs();
    }
    let avg_error = sum_err / total as f64;
    let mean_abs = sum_abs / total as f64;

    Ok(ErrorReport {
        total_count: total,
        transmitted_count,
        suppressed_count: suppressed,
        reduction_fraction: suppressed as f64 / total as f64,
        reduction_percent: percent,
        avg_error,
        max_error: max_err,
        percent_avg_error: (mean_abs > 0.0).then(|| 100.0 * avg_error / mean_abs),
    })
}

/// Reconstructs `raw` from `log` and scores it.
pub fn evaluate(raw: &[Sample], log: &TransmissionLog) -> Result<(Vec<f64>, ErrorReport), MetricsError> {
    if raw.len() != log.total_count {
        return Err(MetricsError::LengthMismatch { raw: raw.len(), reconstructed: log.total_count });
    }
    let timestamps: Vec<f64> = raw.iter().map(|s| s.timestamp).collect();
    let values: Vec<f64> = raw.iter().map(|s| s.value).collect();
    let recon = reconstruct_zoh(&log.entries, &timestamps)?;
    let report = error_report(&values, &recon, log.transmitted())?;
    Ok((recon, report))
}
