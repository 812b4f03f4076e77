//! Configuration parsing, calibration-file ingestion, and deterministic
//! tabular output.
//!
//! Units cross the boundary here: config files and CSV metadata speak in
//! microseconds and kilocounts/s, everything internal is SI.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::CalibrationPair;
use crate::stats::{DetectionParams, PhotonDistribution};

/// Fixed default seed; reproducibility is the product, so it is not
/// time-based.
pub const DEFAULT_SEED: u64 = 0xCAFE;

/// Process exit codes used by the command-line tool.
pub mod exit_codes {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const RUNTIME: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("calibration I/O error: {0}")]
    Io(String),
    #[error("calibration parse error: {0}")]
    Parse(String),
    #[error("invalid calibration data: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("table I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("table encoding error: {0}")]
    Encode(String),
}

/// Output format for emitted tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Top-level run configuration (TOML, line-oriented `key = value` with
/// sections). Unknown keys are rejected with their location.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub params: ParamsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Named scenario to run; subcommands may override.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub seed: u64,
    /// Output directory; falls back to $SHELVESIM_OUT, then ./out.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    pub format: OutputFormat,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            scenario: None,
            seed: DEFAULT_SEED,
            out_dir: None,
            format: OutputFormat::Csv,
        }
    }
}

/// Detection parameters in boundary units (microseconds, kilocounts/s).
///
/// Defaults are the reference configuration: 146.3 / 2.9 kcounts/s rates,
/// 61 us decay time, 10 us window, threshold 0, 2% spin-flip infidelity and
/// five 2 us sub-bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSection {
    pub rate_bright_khz: f64,
    pub rate_background_khz: f64,
    pub decay_time_us: f64,
    pub detect_time_us: f64,
    pub threshold: i64,
    pub spinflip_error: f64,
    pub subbin_time_us: f64,
    pub subbin_count: i64,
}

impl Default for ParamsSection {
    fn default() -> Self {
        Self {
            rate_bright_khz: 146.3,
            rate_background_khz: 2.9,
            decay_time_us: 61.0,
            detect_time_us: 10.0,
            threshold: 0,
            spinflip_error: 0.02,
            subbin_time_us: 2.0,
            subbin_count: 5,
        }
    }
}

impl ParamsSection {
    /// Convert to SI detection parameters, validating every invariant.
    pub fn to_detection_params(&self) -> Result<DetectionParams, ConfigError> {
        if self.threshold < 0 {
            return Err(ConfigError::Invalid {
                key: "params.threshold",
                reason: "threshold must be a non-negative integer".into(),
            });
        }
        if self.threshold > u32::MAX as i64 {
            return Err(ConfigError::Invalid {
                key: "params.threshold",
                reason: "threshold is too large".into(),
            });
        }
        if self.subbin_count < 1 {
            return Err(ConfigError::Invalid {
                key: "params.subbin_count",
                reason: "subbin_count must be a positive integer".into(),
            });
        }
        // Divide by the exactly representable 1e6 so boundary values land on
        // the same f64 as the equivalent SI literal.
        DetectionParams::new(
            self.rate_bright_khz * 1e3,
            self.rate_background_khz * 1e3,
            self.decay_time_us / 1e6,
            self.detect_time_us / 1e6,
            self.threshold as u32,
            self.spinflip_error,
            self.subbin_time_us / 1e6,
            self.subbin_count as u32,
        )
        .map_err(|e| ConfigError::Invalid {
            key: "params",
            reason: e.to_string(),
        })
    }
}

/// Parse a configuration document. An empty document yields all defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    // Surface parameter invariants at load time.
    config.params.to_detection_params()?;
    Ok(config)
}

/// Serialize a configuration so `parse_config(serialize(c)) == c`.
pub fn serialize_config(config: &RunConfig) -> String {
    toml::to_string(config).expect("config serializes")
}

// ---------------------------------------------------------------------------
// Calibration files
// ---------------------------------------------------------------------------

/// Optional metadata carried in `# key = value` comment lines of a
/// calibration file, in boundary units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CalibrationMeta {
    pub detect_time_us: Option<f64>,
    pub rate_bright_khz: Option<f64>,
    pub rate_background_khz: Option<f64>,
}

/// A loaded calibration file: normalized histograms plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationFile {
    pub pair: CalibrationPair,
    pub meta: CalibrationMeta,
    pub bright_total: u64,
    pub dark_total: u64,
}

const CALIBRATION_HEADER: &str = "k,bright_count,dark_count";

/// Load a `k,bright_count,dark_count` CSV with optional leading `#` metadata
/// lines. Counts must be non-negative integers with k contiguous from 0.
pub fn load_calibration(path: &Path) -> Result<CalibrationFile, CalibrationError> {
    let text = std::fs::read_to_string(path).map_err(|e| CalibrationError::Io(e.to_string()))?;
    let mut meta = CalibrationMeta::default();
    let mut lines = Vec::new();
    for line in text.lines() {
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once('=') {
                let value: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| CalibrationError::Parse(format!("bad metadata line: {line}")))?;
                match key.trim() {
                    "detect_time_us" => meta.detect_time_us = Some(value),
                    "rate_bright_khz" => meta.rate_bright_khz = Some(value),
                    "rate_background_khz" => meta.rate_background_khz = Some(value),
                    other => {
                        return Err(CalibrationError::Parse(format!(
                            "unknown metadata key `{other}`"
                        )))
                    }
                }
            }
        } else if !line.trim().is_empty() {
            lines.push(line);
        }
    }
    if lines.is_empty() {
        return Err(CalibrationError::Parse("file has no data".into()));
    }
    if lines[0].trim() != CALIBRATION_HEADER {
        return Err(CalibrationError::Parse(format!(
            "expected header `{CALIBRATION_HEADER}`, found `{}`",
            lines[0]
        )));
    }
    let mut bright = Vec::new();
    let mut dark = Vec::new();
    for (row_idx, line) in lines[1..].iter().enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(CalibrationError::Parse(format!(
                "row {} has {} fields, expected 3",
                row_idx + 1,
                fields.len()
            )));
        }
        let k: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|_| CalibrationError::Parse(format!("bad k at row {}", row_idx + 1)))?;
        if k != row_idx as u64 {
            return Err(CalibrationError::Invalid(format!(
                "k must be contiguous from 0; row {} has k = {k}",
                row_idx + 1
            )));
        }
        let parse_count = |s: &str| -> Result<u64, CalibrationError> {
            s.trim().parse().map_err(|_| {
                CalibrationError::Invalid(format!(
                    "counts must be non-negative integers (row {})",
                    row_idx + 1
                ))
            })
        };
        bright.push(parse_count(fields[1])?);
        dark.push(parse_count(fields[2])?);
    }
    if bright.len() < 2 {
        return Err(CalibrationError::Invalid(
            "calibration needs at least two count bins".into(),
        ));
    }
    let bright_total: u64 = bright.iter().sum();
    let dark_total: u64 = dark.iter().sum();
    let bright_hist = PhotonDistribution::from_counts(&bright)
        .map_err(|e| CalibrationError::Invalid(e.to_string()))?;
    let dark_hist = PhotonDistribution::from_counts(&dark)
        .map_err(|e| CalibrationError::Invalid(e.to_string()))?;
    let pair = CalibrationPair::new(bright_hist, dark_hist)
        .map_err(|e| CalibrationError::Invalid(e.to_string()))?;
    Ok(CalibrationFile {
        pair,
        meta,
        bright_total,
        dark_total,
    })
}

/// Write a calibration file in the schema [`load_calibration`] accepts.
pub fn write_calibration(
    path: &Path,
    bright: &[u64],
    dark: &[u64],
    meta: &CalibrationMeta,
) -> Result<(), CalibrationError> {
    let len = bright.len().max(dark.len());
    let mut text = String::new();
    if let Some(v) = meta.detect_time_us {
        text.push_str(&format!("# detect_time_us = {v}\n"));
    }
    if let Some(v) = meta.rate_bright_khz {
        text.push_str(&format!("# rate_bright_khz = {v}\n"));
    }
    if let Some(v) = meta.rate_background_khz {
        text.push_str(&format!("# rate_background_khz = {v}\n"));
    }
    text.push_str(CALIBRATION_HEADER);
    text.push('\n');
    for k in 0..len {
        let b = bright.get(k).copied().unwrap_or(0);
        let d = dark.get(k).copied().unwrap_or(0);
        text.push_str(&format!("{k},{b},{d}\n"));
    }
    std::fs::write(path, text).map_err(|e| CalibrationError::Io(e.to_string()))
}

/// Load a single `k,count` histogram as a normalized distribution.
pub fn load_observed_histogram(path: &Path) -> Result<PhotonDistribution, CalibrationError> {
    let text = std::fs::read_to_string(path).map_err(|e| CalibrationError::Io(e.to_string()))?;
    let mut counts = Vec::new();
    for (idx, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        if idx == 0 {
            if line.trim() != "k,count" {
                return Err(CalibrationError::Parse(format!(
                    "expected header `k,count`, found `{line}`"
                )));
            }
            continue;
        }
        let (k_str, count_str) = line
            .split_once(',')
            .ok_or_else(|| CalibrationError::Parse(format!("bad row: {line}")))?;
        let k: usize = k_str
            .trim()
            .parse()
            .map_err(|_| CalibrationError::Parse(format!("bad k: {line}")))?;
        if k != idx - 1 {
            return Err(CalibrationError::Invalid(
                "k must be contiguous from 0".into(),
            ));
        }
        let count: u64 = count_str.trim().parse().map_err(|_| {
            CalibrationError::Invalid("counts must be non-negative integers".into())
        })?;
        counts.push(count);
    }
    PhotonDistribution::from_counts(&counts).map_err(|e| CalibrationError::Invalid(e.to_string()))
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            // Shortest round-trippable decimal form; parses back bit-exact.
            Cell::Float(v) => write!(f, "{v}"),
            Cell::Text(v) => write!(f, "{v}"),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// A named table with homogeneous rows and a deterministic row order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: Vec<&'static str>) -> Self {
        Self {
            name: name.to_string(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    /// RFC-4180-style CSV with `\n` line endings and `.` decimal separators.
    pub fn to_csv_string(&self) -> Result<String, TableError> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer
            .write_record(&self.columns)
            .map_err(|e| TableError::Encode(e.to_string()))?;
        for row in &self.rows {
            writer
                .write_record(row.iter().map(|c| c.to_string()))
                .map_err(|e| TableError::Encode(e.to_string()))?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| TableError::Encode(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| TableError::Encode(e.to_string()))
    }

    /// JSON array of row objects with sorted keys.
    pub fn to_json_string(&self) -> Result<String, TableError> {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let map: serde_json::Map<String, serde_json::Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(col, cell)| {
                        let value = match cell {
                            Cell::Int(v) => serde_json::Value::from(*v),
                            Cell::Float(v) => serde_json::Number::from_f64(*v)
                                .map(serde_json::Value::Number)
                                .unwrap_or_else(|| serde_json::Value::String(v.to_string())),
                            Cell::Text(v) => serde_json::Value::String(v.clone()),
                        };
                        (col.to_string(), value)
                    })
                    .collect();
                serde_json::Value::Object(map)
            })
            .collect();
        serde_json::to_string_pretty(&rows)
            .map(|s| s + "\n")
            .map_err(|e| TableError::Encode(e.to_string()))
    }

    pub fn render(&self, format: OutputFormat) -> Result<String, TableError> {
        match format {
            OutputFormat::Csv => self.to_csv_string(),
            OutputFormat::Json => self.to_json_string(),
        }
    }

    /// Write under `dir` as `<prefix>__<table name>.<ext>`.
    pub fn write_to(
        &self,
        dir: &Path,
        prefix: &str,
        format: OutputFormat,
    ) -> Result<PathBuf, TableError> {
        let path = dir.join(format!("{prefix}__{}.{}", self.name, format.extension()));
        std::fs::write(&path, self.render(format)?)?;
        Ok(path)
    }
}
