//! Hardware probes behind one interface.
//!
//! Backends: RAPL energy-status MSRs, Linux powercap, Apple SMC, the Nvidia
//! management library, OS usage/frequency/memory counters, and a deterministic
//! simulated source. [`detect_probes`] initializes whichever of them work on
//! the current host; failures become warnings rather than errors.

pub mod capability;
pub mod counter;
pub mod metric;
pub mod msr;
pub mod nvml;
pub mod os;
pub mod powercap;
pub mod simulated;
pub mod smc;
pub mod vendor;

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

pub use capability::{CpuVendor, GpuVendor, Platform, ProbeCapabilities};
pub use counter::{counter_delta_joules, CounterError, RawCounterReading};
pub use metric::{CounterSpec, Domain, MetricDescriptor, MetricError, MetricKind, Property, Unit};

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("metric {0} is not provided by this probe")]
    UnsupportedMetric(String),
    #[error("reading {path}: {source}")]
    Device {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Unavailable(String),
    #[error("invalid reading: {0}")]
    InvalidReading(String),
    #[error(transparent)]
    Counter(#[from] CounterError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

impl ProbeError {
    pub(crate) fn device(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ProbeError::Device {
            path: path.into(),
            source,
        }
    }
}

/// A source of one or more metrics. A probe is polled by a single sampling
/// thread at a time, so reads take `&mut self`.
pub trait Probe: Send {
    fn name(&self) -> &str;

    fn capabilities(&self) -> &ProbeCapabilities;

    /// Called once per tick before any read; lets backends refresh shared
    /// state (e.g. one `/proc/stat` pass for every core).
    fn begin_tick(&mut self) {}

    fn read_counter(&mut self, metric: &MetricDescriptor) -> Result<RawCounterReading, ProbeError> {
        Err(ProbeError::UnsupportedMetric(metric.name.clone()))
    }

    fn read_power_watts(&mut self, metric: &MetricDescriptor) -> Result<f64, ProbeError> {
        Err(ProbeError::UnsupportedMetric(metric.name.clone()))
    }

    fn read_gauge(&mut self, metric: &MetricDescriptor) -> Result<f64, ProbeError> {
        Err(ProbeError::UnsupportedMetric(metric.name.clone()))
    }
}

impl fmt::Debug for dyn Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Probe")
            .field("name", &self.name())
            .field("metrics", &self.capabilities().metrics.len())
            .finish()
    }
}

/// Reads the cell value for `metric`: decoded joules for counters, watts for
/// power, the raw gauge otherwise.
pub fn read_cell(probe: &mut dyn Probe, metric: &MetricDescriptor) -> Result<f64, ProbeError> {
    let value = match metric.kind {
        MetricKind::CumulativeEnergy => probe.read_counter(metric)?.joules(),
        MetricKind::InstantaneousPower => {
            let w = probe.read_power_watts(metric)?;
            if !(w.is_finite() && w >= 0.0) {
                return Err(ProbeError::InvalidReading(format!("{}: {w} W", metric.name)));
            }
            w
        }
        MetricKind::Gauge => probe.read_gauge(metric)?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ProbeError::InvalidReading(format!("{}: {value}", metric.name)))
    }
}

/// A backend that failed to initialize.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeWarning {
    pub backend: &'static str,
    pub message: String,
}

impl fmt::Display for ProbeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.backend, self.message)
    }
}

/// Where to look for host interfaces. Tests point these at temporary trees.
#[derive(Debug, Clone)]
pub struct HostConfig {
    pub sys_root: PathBuf,
    pub dev_root: PathBuf,
    pub smc_keys: smc::SmcKeyTable,
    /// Overrides the NVML shared-library name.
    pub nvml_library: Option<PathBuf>,
    pub platform: Option<Platform>,
    pub cpu_vendor: Option<CpuVendor>,
    /// Include OS usage/frequency/memory gauges.
    pub gauges: bool,
}

impl Default for HostConfig {
    fn default() -> Self {
        Self {
            sys_root: PathBuf::from("/sys"),
            dev_root: PathBuf::from("/dev"),
            smc_keys: smc::SmcKeyTable::from_env_or_default(),
            nvml_library: None,
            platform: None,
            cpu_vendor: None,
            gauges: true,
        }
    }
}

/// Result of probing the host.
#[derive(Debug, Default)]
pub struct Detection {
    pub probes: Vec<Box<dyn Probe>>,
    pub warnings: Vec<ProbeWarning>,
    pub platform: Option<Platform>,
    pub cpu_vendor: Option<CpuVendor>,
}

impl Detection {
    pub fn capabilities(&self) -> Vec<&ProbeCapabilities> {
        self.probes.iter().map(|p| p.capabilities()).collect()
    }

    /// Every metric across all probes, in session column order.
    pub fn schema(&self) -> Vec<MetricDescriptor> {
        session_schema(&self.probes)
    }

    fn warn(&mut self, backend: &'static str, message: impl fmt::Display) {
        self.warnings.push(ProbeWarning {
            backend,
            message: message.to_string(),
        });
    }

    fn add(&mut self, mut probe: Box<dyn Probe>) {
        if probe.capabilities().metrics.is_empty() {
            return;
        }
        // Filtering happens inside each backend; this is a last check.
        debug_assert!(probe.capabilities().nonconforming().is_empty());
        probe.begin_tick();
        self.probes.push(probe);
    }
}

/// Collects all metrics from `probes` in session order, keeping the first
/// probe's descriptor when two probes report the same name.
pub fn session_schema(probes: &[Box<dyn Probe>]) -> Vec<MetricDescriptor> {
    let mut seen = std::collections::HashSet::new();
    let mut schema: Vec<MetricDescriptor> = probes
        .iter()
        .flat_map(|p| p.capabilities().metrics.iter())
        .filter(|m| seen.insert(m.name.clone()))
        .cloned()
        .collect();
    schema.sort_by_key(MetricDescriptor::order_key);
    schema
}

/// Probes the current host with default interface locations.
pub fn detect_probes() -> Detection {
    detect_with(&HostConfig::default())
}

pub fn detect_with(host: &HostConfig) -> Detection {
    let mut det = Detection::default();
    let Some(platform) = host.platform.or_else(Platform::host) else {
        det.warn("host", "unsupported operating system; only usage gauges are available");
        return det;
    };
    let cpu_vendor = host.cpu_vendor.unwrap_or_else(os::host_cpu_vendor);
    det.platform = Some(platform);
    det.cpu_vendor = Some(cpu_vendor);

    match platform {
        Platform::Linux => {
            match msr::MsrProbe::open(&host.dev_root, &host.sys_root, cpu_vendor) {
                Ok(p) => det.add(Box::new(p)),
                Err(e) => {
                    det.warn("msr", e);
                    match powercap::PowercapProbe::open(&host.sys_root, cpu_vendor) {
                        Ok(p) => det.add(Box::new(p)),
                        Err(e) => det.warn("powercap", e),
                    }
                }
            }
        }
        Platform::Windows => det.warn("msr", msr::windows_driver_status()),
        Platform::Macos => match smc::SmcProbe::open(&host.smc_keys, cpu_vendor) {
            Ok(p) => det.add(Box::new(p)),
            Err(e) => det.warn("smc", e),
        },
        Platform::Simulated => {}
    }

    if platform != Platform::Macos {
        match nvml::NvmlProbe::open(host.nvml_library.as_deref(), platform, cpu_vendor) {
            Ok((p, warnings)) => {
                for w in warnings {
                    det.warn("nvml", w);
                }
                det.add(Box::new(p));
            }
            Err(e) => det.warn("nvml", e),
        }
    }

    if host.gauges {
        match os::OsProbe::new(platform, cpu_vendor) {
            Ok(p) => det.add(Box::new(p)),
            Err(e) => det.warn("os", e),
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_order_is_energy_then_gauges() {
        let clock = std::sync::Arc::new(crate::timing::ManualClock::new(0));
        let sim = simulated::SimulatedProbe::new(
            simulated::ProfileSpec::constant(1.0),
            clock,
        )
        .unwrap();
        let gauges = os::OsProbe::new(Platform::Linux, CpuVendor::Intel).unwrap();
        let probes: Vec<Box<dyn Probe>> = vec![Box::new(gauges), Box::new(sim)];
        let schema = session_schema(&probes);
        assert_eq!(schema[0].name, "PACKAGE_ENERGY");
        assert_eq!(schema[1].name, "PACKAGE_POWER");
        let first_gauge = schema.iter().position(|m| m.kind == MetricKind::Gauge).unwrap();
        assert!(schema[first_gauge..].iter().all(|m| m.kind == MetricKind::Gauge));
    }
}
