//! CSV traces and per-run summaries.
//!
//! A trace file looks like
//!
//! ```text
//! # meta: {"tool_version":"0.1.0","interval_ms":100,...}
//! # column: {"name":"PACKAGE_ENERGY","unit":"joules",...}
//! Delta,Time,PACKAGE_ENERGY (J),CPU_USAGE_0
//! 0,1700000000000,12.5,3
//! 100,1700000000100,13.25,
//! ```
//!
//! `Delta` is milliseconds since the previous row, `Time` is Unix epoch
//! milliseconds, and an empty cell is a failed read. The `#` lines are
//! optional; without them columns are inferred from their headers.

mod csv;
mod summary;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::probes::{CpuVendor, MetricDescriptor, Platform};
use crate::sampler::Sample;

pub use self::csv::{read_csv, read_csv_str, write_csv, write_csv_string, TraceWriter};
pub use self::summary::{
    interval_energies, select_energy_source, summarize, summarize_metrics, EnergySource, RunSummary,
    SummaryError,
};

pub const DELTA_COLUMN: &str = "Delta";
pub const TIME_COLUMN: &str = "Time";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("trace has no rows")]
    Empty,
    #[error("row {row}: Time {time} does not increase (previous {prev})")]
    TimeNotIncreasing { row: usize, prev: u64, time: u64 },
    #[error("row {row} has {got} values for {expected} metrics")]
    RowWidth { row: usize, got: usize, expected: usize },
}

/// Provenance of a session, stored as a `# meta:` comment line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionMeta {
    pub tool_version: Option<String>,
    pub platform: Option<Platform>,
    pub cpu_vendor: Option<CpuVendor>,
    pub interval_ms: Option<u64>,
    pub argv: Vec<String>,
}

impl SessionMeta {
    pub fn current(interval_ms: u64, platform: Option<Platform>, cpu_vendor: Option<CpuVendor>, argv: &[String]) -> Self {
        Self {
            tool_version: Some(crate::TOOL_VERSION.to_string()),
            platform,
            cpu_vendor,
            interval_ms: Some(interval_ms),
            argv: argv.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub meta: SessionMeta,
    pub schema: Vec<MetricDescriptor>,
    pub rows: Vec<Sample>,
}

impl Trace {
    /// Full header: `Delta`, `Time`, then one column per metric.
    pub fn columns(&self) -> Vec<String> {
        [DELTA_COLUMN.to_string(), TIME_COLUMN.to_string()]
            .into_iter()
            .chain(self.schema.iter().map(MetricDescriptor::column_name))
            .collect()
    }

    pub fn metric_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|m| m.name == name)
    }

    /// Values of one metric across all rows.
    pub fn column(&self, index: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.rows.iter().map(move |r| r.values[index])
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.rows.is_empty() {
            return Err(TraceError::Empty);
        }
        for (row, s) in self.rows.iter().enumerate() {
            if s.values.len() != self.schema.len() {
                return Err(TraceError::RowWidth {
                    row,
                    got: s.values.len(),
                    expected: self.schema.len(),
                });
            }
        }
        for (row, w) in self.rows.windows(2).enumerate() {
            if w[1].time_ms <= w[0].time_ms {
                return Err(TraceError::TimeNotIncreasing {
                    row: row + 1,
                    prev: w[0].time_ms,
                    time: w[1].time_ms,
                });
            }
        }
        Ok(())
    }

    /// Wall-clock span from the first to the last row.
    pub fn duration_s(&self) -> f64 {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => (b.time_ms - a.time_ms) as f64 / 1000.0,
            _ => 0.0,
        }
    }
}
