use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Joules,
    Watts,
    Megahertz,
    Percent,
    Bytes,
    Celsius,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Joules => "J",
            Unit::Watts => "W",
            Unit::Megahertz => "MHz",
            Unit::Percent => "%",
            Unit::Bytes => "B",
            Unit::Celsius => "C",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Monotone (modulo wrap) energy counter; cells hold decoded joules.
    CumulativeEnergy,
    /// Power averaged by the device over its own window.
    InstantaneousPower,
    /// Anything else sampled as-is: usage, frequency, memory.
    Gauge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Package,
    Core(u32),
    System,
    Gpu(u32),
    Memory,
}

impl Domain {
    fn rank(self) -> (u8, u32) {
        match self {
            Domain::Package => (0, 0),
            Domain::Core(i) => (1, i),
            Domain::System => (2, 0),
            Domain::Gpu(i) => (3, i),
            Domain::Memory => (4, 0),
        }
    }
}

/// Wrap parameters of a hardware energy counter. A cell value `v` joules
/// corresponds to raw count `v / unit_joules`, wrapping at `2^width_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterSpec {
    pub width_bits: u32,
    pub unit_joules: f64,
}

impl CounterSpec {
    pub fn new(width_bits: u32, unit_joules: f64) -> Result<Self, MetricError> {
        if !(1..=64).contains(&width_bits) {
            return Err(MetricError::CounterWidth(width_bits));
        }
        if !(unit_joules.is_finite() && unit_joules > 0.0) {
            return Err(MetricError::CounterUnit(unit_joules));
        }
        Ok(Self {
            width_bits,
            unit_joules,
        })
    }
}

/// Hardware property rows a metric can belong to; this is the granularity at
/// which platform support is declared (see [`super::capability`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Property {
    CpuUsage,
    PackagePower,
    SystemPower,
    CoreFrequency,
    CorePower,
    MemoryUsage,
    GpuUsage,
    GpuFrequency,
    GpuPower,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("metric name {0:?} must match [A-Z0-9_]+")]
    InvalidName(String),
    #[error("metric {name}: kind {kind:?} requires unit {expected:?}, got {got:?}")]
    KindUnitMismatch {
        name: String,
        kind: MetricKind,
        expected: Unit,
        got: Unit,
    },
    #[error("counter width must be within 1..=64 bits, got {0}")]
    CounterWidth(u32),
    #[error("counter unit must be a positive finite number of joules, got {0}")]
    CounterUnit(f64),
    #[error("cannot infer a metric from column {0:?}")]
    UnknownColumn(String),
}

/// Identity of one measured quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDescriptor {
    pub name: String,
    pub unit: Unit,
    pub kind: MetricKind,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counter: Option<CounterSpec>,
}

pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit() || b == b'_')
}

impl MetricDescriptor {
    pub fn new(
        name: impl Into<String>,
        unit: Unit,
        kind: MetricKind,
        domain: Domain,
    ) -> Result<Self, MetricError> {
        let name = name.into();
        if !is_valid_name(&name) {
            return Err(MetricError::InvalidName(name));
        }
        let expected = match kind {
            MetricKind::CumulativeEnergy => Some(Unit::Joules),
            MetricKind::InstantaneousPower => Some(Unit::Watts),
            MetricKind::Gauge => None,
        };
        if let Some(expected) = expected {
            if expected != unit {
                return Err(MetricError::KindUnitMismatch {
                    name,
                    kind,
                    expected,
                    got: unit,
                });
            }
        }
        Ok(Self {
            name,
            unit,
            kind,
            domain,
            counter: None,
        })
    }

    pub fn energy(
        name: impl Into<String>,
        domain: Domain,
        counter: CounterSpec,
    ) -> Result<Self, MetricError> {
        let mut m = Self::new(name, Unit::Joules, MetricKind::CumulativeEnergy, domain)?;
        m.counter = Some(counter);
        Ok(m)
    }

    pub fn power(name: impl Into<String>, domain: Domain) -> Result<Self, MetricError> {
        Self::new(name, Unit::Watts, MetricKind::InstantaneousPower, domain)
    }

    pub fn gauge(name: impl Into<String>, unit: Unit, domain: Domain) -> Result<Self, MetricError> {
        Self::new(name, unit, MetricKind::Gauge, domain)
    }

    /// Header used in CSV traces: energy and power columns carry their unit,
    /// e.g. `PACKAGE_ENERGY (J)`; gauges use the bare name.
    pub fn column_name(&self) -> String {
        match self.unit {
            Unit::Joules | Unit::Watts => format!("{} ({})", self.name, self.unit.symbol()),
            _ => self.name.clone(),
        }
    }

    /// Best-effort reconstruction of a descriptor from a bare CSV header, for
    /// traces that carry no column metadata.
    pub fn from_column_name(column: &str) -> Result<Self, MetricError> {
        let unknown = || MetricError::UnknownColumn(column.to_string());
        if let Some(name) = column.strip_suffix(" (J)") {
            let domain = infer_domain(name);
            return Self::new(name, Unit::Joules, MetricKind::CumulativeEnergy, domain);
        }
        if let Some(name) = column.strip_suffix(" (W)") {
            let domain = infer_domain(name);
            return Self::new(name, Unit::Watts, MetricKind::InstantaneousPower, domain);
        }
        if !is_valid_name(column) {
            return Err(unknown());
        }
        let domain = infer_domain(column);
        let unit = if column.contains("USAGE") {
            Unit::Percent
        } else if column.contains("FREQ") {
            Unit::Megahertz
        } else if column.contains("MEMORY") || column.contains("SWAP") {
            Unit::Bytes
        } else if column.contains("TEMP") {
            Unit::Celsius
        } else {
            return Err(unknown());
        };
        Self::gauge(column, unit, domain)
    }

    /// Which supported-property row this metric falls under, if any.
    pub fn property(&self) -> Option<Property> {
        use Property::*;
        match (self.domain, self.unit) {
            (Domain::Core(_), Unit::Percent) => Some(CpuUsage),
            (Domain::Core(_), Unit::Megahertz) => Some(CoreFrequency),
            (Domain::Core(_), Unit::Joules | Unit::Watts) => Some(CorePower),
            (Domain::Package, Unit::Joules | Unit::Watts) => Some(PackagePower),
            (Domain::System, Unit::Joules | Unit::Watts) => Some(SystemPower),
            (Domain::Memory, Unit::Bytes) => Some(MemoryUsage),
            (Domain::Gpu(_), Unit::Percent) => Some(GpuUsage),
            (Domain::Gpu(_), Unit::Megahertz) => Some(GpuFrequency),
            (Domain::Gpu(_), Unit::Joules | Unit::Watts) => Some(GpuPower),
            _ => None,
        }
    }

    /// Session column order: energy/power first (package, per-core, system,
    /// GPU), then gauges in the same domain order. Ties keep backend order,
    /// which lists sockets in ascending order.
    pub fn order_key(&self) -> impl Ord {
        let (rank, index) = self.domain.rank();
        (self.kind == MetricKind::Gauge, rank, self.unit, index)
    }
}

fn infer_domain(name: &str) -> Domain {
    fn index_after(s: &str) -> Option<u32> {
        let digits: String = s.chars().take_while(|c| c.is_ascii_digit()).collect();
        digits.parse().ok()
    }
    fn trailing_index(s: &str) -> Option<u32> {
        s.rsplit('_').next().and_then(|d| d.parse().ok())
    }
    if let Some(rest) = name.strip_prefix("CORE") {
        if let Some(i) = index_after(rest) {
            return Domain::Core(i);
        }
    }
    if let Some(rest) = name.strip_prefix("GPU") {
        return Domain::Gpu(index_after(rest).unwrap_or(0));
    }
    if name.starts_with("CPU_") {
        if let Some(i) = trailing_index(name) {
            return Domain::Core(i);
        }
    }
    if name.starts_with("SYSTEM") {
        return Domain::System;
    }
    if name.contains("MEMORY") || name.contains("SWAP") || name.starts_with("DRAM") {
        return Domain::Memory;
    }
    Domain::Package
}

impl fmt::Display for MetricDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}, {:?}, {:?}]", self.name, self.unit.symbol(), self.kind, self.domain)
    }
}
