//! Flight-controller logs: a ULog reader/writer subset, a CSV fallback and
//! deterministic plot rendering.
//!
//! Series are keyed `<topic>.<field>`; array elements become
//! `<topic>.<field>[i]` and nested structs `<topic>.<field>.<sub>`. A topic
//! logged under a non-zero multi-instance id is named `<topic>_<id>`.

mod csvlog;
mod plot;
mod png;
mod ulog;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csvlog::{parse_csv, write_csv};
pub use plot::{axes_for, decimate, render_plot, Axes, PlotSeries, PlotSpec, MAX_PLOT_POINTS};
pub use png::encode_rgba;
pub use ulog::{parse_ulog, parse_ulog_with_stats, write_ulog, UlogStats, ULOG_MAGIC};

#[derive(Debug, Error, PartialEq)]
pub enum FlightLogError {
    #[error("input does not start with the ULog magic")]
    BadMagic,
    #[error("ULog header is truncated or invalid")]
    CorruptHeader,
    #[error("log is corrupt: {0}")]
    CorruptLog(String),
    #[error("log contains no data series")]
    EmptyLog,
    #[error("CSV header row must start with timestamp_us")]
    MissingHeader,
    #[error("CSV has no data rows")]
    NoDataRows,
    #[error("timestamps not strictly increasing at row {row}")]
    NonMonotonicTimestamps { row: usize },
    #[error("bad CSV cell at row {row}, column {column}: {value:?}")]
    BadCell { row: usize, column: usize, value: String },
    #[error("invalid log: {0}")]
    InvalidLog(String),
    #[error("invalid plot spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Ulog,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub timestamps: Vec<u64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(timestamps: Vec<u64>, values: Vec<f64>) -> Result<Self, FlightLogError> {
        let ts = Self { timestamps, values };
        ts.check()?;
        Ok(ts)
    }

    pub fn check(&self) -> Result<(), FlightLogError> {
        if self.timestamps.len() != self.values.len() {
            return Err(FlightLogError::InvalidLog("timestamps and values differ in length".into()));
        }
        if self.timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FlightLogError::InvalidLog("timestamps not strictly increasing".into()));
        }
        if self.values.iter().any(|v| v.is_infinite()) {
            return Err(FlightLogError::InvalidLog("infinite value".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn has_nan(&self) -> bool {
        self.values.iter().any(|v| v.is_nan())
    }

    pub fn points(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.timestamps.iter().copied().zip(self.values.iter().copied())
    }

    fn bitwise_eq(&self, other: &Self) -> bool {
        self.timestamps == other.timestamps
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedMessage {
    pub timestamp: u64,
    /// Syslog-style severity, 0 (emergency) to 7 (debug).
    pub level: u8,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "lowercase")]
pub enum ParamValue {
    Int(i32),
    Float(f32),
}

impl ParamValue {
    pub fn as_f64(self) -> f64 {
        match self {
            ParamValue::Int(i) => i as f64,
            ParamValue::Float(f) => f as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightLog {
    /// Microseconds; the ULog header timestamp or the first CSV row.
    pub start_time: u64,
    pub series: BTreeMap<String, TimeSeries>,
    #[serde(default)]
    pub messages: Vec<LoggedMessage>,
    #[serde(default)]
    pub info: BTreeMap<String, String>,
    #[serde(default)]
    pub parameters: BTreeMap<String, ParamValue>,
    pub source_format: SourceFormat,
}

impl FlightLog {
    pub fn new(start_time: u64, source_format: SourceFormat) -> Self {
        Self {
            start_time,
            series: BTreeMap::new(),
            messages: Vec::new(),
            info: BTreeMap::new(),
            parameters: BTreeMap::new(),
            source_format,
        }
    }

    pub fn validate(&self) -> Result<(), FlightLogError> {
        if self.series.is_empty() {
            return Err(FlightLogError::EmptyLog);
        }
        for (name, s) in &self.series {
            if s.is_empty() {
                return Err(FlightLogError::InvalidLog(format!("series {name} is empty")));
            }
            s.check().map_err(|e| FlightLogError::InvalidLog(format!("series {name}: {e}")))?;
        }
        if let Some(m) = self.messages.iter().find(|m| m.level > 7) {
            return Err(FlightLogError::InvalidLog(format!("message level {} out of range", m.level)));
        }
        Ok(())
    }

    /// Equality that compares float values by bit pattern, so NaN payloads count.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.start_time == other.start_time
            && self.source_format == other.source_format
            && self.messages == other.messages
            && self.info == other.info
            && self.parameters.len() == other.parameters.len()
            && self.parameters.iter().zip(&other.parameters).all(|((ka, a), (kb, b))| {
                ka == kb
                    && match (a, b) {
                        (ParamValue::Int(x), ParamValue::Int(y)) => x == y,
                        (ParamValue::Float(x), ParamValue::Float(y)) => x.to_bits() == y.to_bits(),
                        _ => false,
                    }
            })
            && self.series.len() == other.series.len()
            && self
                .series
                .iter()
                .zip(&other.series)
                .all(|((ka, a), (kb, b))| ka == kb && a.bitwise_eq(b))
    }

    /// Series whose name is exactly `key`, or whose field part (after the
    /// topic) equals `key`.
    pub fn find(&self, key: &str) -> Option<(&str, &TimeSeries)> {
        if let Some((k, s)) = self.series.get_key_value(key) {
            return Some((k.as_str(), s));
        }
        self.series
            .iter()
            .find(|(name, _)| field_part(name) == key)
            .map(|(k, s)| (k.as_str(), s))
    }

    /// Every series whose field part equals `field`.
    pub fn find_all(&self, field: &str) -> Vec<(&str, &TimeSeries)> {
        self.series
            .iter()
            .filter(|(name, _)| name.as_str() == field || field_part(name) == field)
            .map(|(k, s)| (k.as_str(), s))
            .collect()
    }

    /// Names of series holding at least one NaN.
    pub fn nan_flags(&self) -> Vec<&str> {
        self.series
            .iter()
            .filter(|(_, s)| s.has_nan())
            .map(|(k, _)| k.as_str())
            .collect()
    }

    pub fn duration_us(&self) -> u64 {
        let first = self.series.values().filter_map(|s| s.timestamps.first()).min();
        let last = self.series.values().filter_map(|s| s.timestamps.last()).max();
        match (first, last) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }
}

/// `topic.field` → `field`; names without a topic are returned unchanged.
pub fn field_part(name: &str) -> &str {
    name.split_once('.').map_or(name, |(_, f)| f)
}

/// Parses either format, sniffing the ULog magic.
pub fn parse_any(bytes: &[u8]) -> Result<FlightLog, FlightLogError> {
    if bytes.starts_with(&ULOG_MAGIC) {
        parse_ulog(bytes)
    } else if bytes.starts_with(b"timestamp_us") {
        parse_csv(bytes)
    } else {
        Err(FlightLogError::BadMagic)
    }
}
