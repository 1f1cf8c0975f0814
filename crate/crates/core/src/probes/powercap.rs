//! Linux powercap fallback: `/sys/class/powercap/intel-rapl:N/energy_uj`.
//!
//! The kernel counter wraps at `max_energy_range_uj`. The probe unwraps it
//! into a 64-bit software accumulator so downstream code only ever sees a
//! plain 64-bit microjoule counter.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::capability::{CpuVendor, Platform, ProbeCapabilities};
use super::counter::RawCounterReading;
use super::metric::{CounterSpec, Domain, MetricDescriptor};
use super::msr::package_metric_name;
use super::{Probe, ProbeError};

pub const POWERCAP_UNIT_JOULES: f64 = 1e-6;
pub const POWERCAP_WIDTH_BITS: u32 = 64;

/// Parses a sysfs integer file body such as `"123456\n"`.
pub fn parse_counter(text: &str) -> Result<u64, ProbeError> {
    text.trim()
        .parse::<u64>()
        .map_err(|e| ProbeError::InvalidReading(format!("{:?}: {e}", text.trim())))
}

/// Microjoules consumed between two raw reads of a zone counter whose values
/// lie in `0..=max_range`.
pub fn zone_delta_uj(prev: u64, next: u64, max_range: u64) -> u64 {
    if next >= prev {
        next - prev
    } else {
        max_range.saturating_sub(prev).saturating_add(next)
    }
}

struct Zone {
    metric: String,
    energy_path: PathBuf,
    max_range: u64,
    last: Option<u64>,
    accumulated: u64,
}

impl Zone {
    fn read(&mut self) -> Result<u64, ProbeError> {
        let text = fs::read_to_string(&self.energy_path)
            .map_err(|e| ProbeError::device(&self.energy_path, e))?;
        let value = parse_counter(&text)?;
        match self.last {
            None => self.accumulated = value,
            Some(prev) => {
                self.accumulated = self
                    .accumulated
                    .wrapping_add(zone_delta_uj(prev, value, self.max_range));
            }
        }
        self.last = Some(value);
        Ok(self.accumulated)
    }
}

pub struct PowercapProbe {
    zones: Vec<Zone>,
    caps: ProbeCapabilities,
    epoch: Instant,
}

/// Top-level RAPL zones are named `<driver>-rapl:<N>`; sub-zones add a
/// second `:<M>` and are skipped.
fn is_top_level_zone(name: &str) -> bool {
    match name.split_once("-rapl:") {
        Some((_, idx)) => !idx.is_empty() && idx.bytes().all(|b| b.is_ascii_digit()),
        None => false,
    }
}

impl PowercapProbe {
    pub fn open(sys_root: &Path, vendor: CpuVendor) -> Result<Self, ProbeError> {
        let base = sys_root.join("class/powercap");
        let entries = fs::read_dir(&base).map_err(|e| ProbeError::device(&base, e))?;
        let mut dirs: Vec<PathBuf> = entries
            .filter_map(Result::ok)
            .filter(|e| e.file_name().to_str().is_some_and(is_top_level_zone))
            .map(|e| e.path())
            .collect();
        dirs.sort();

        let mut zones = Vec::new();
        let mut last_err = None;
        for dir in dirs {
            let name = fs::read_to_string(dir.join("name")).unwrap_or_default();
            let Some(package) = name.trim().strip_prefix("package-").and_then(|i| i.parse::<u32>().ok())
            else {
                continue;
            };
            let max_path = dir.join("max_energy_range_uj");
            let max_range = fs::read_to_string(&max_path)
                .map_err(|e| ProbeError::device(&max_path, e))
                .and_then(|t| parse_counter(&t))
                .unwrap_or(u64::MAX);
            let mut zone = Zone {
                metric: package_metric_name(package, "ENERGY"),
                energy_path: dir.join("energy_uj"),
                max_range,
                last: None,
                accumulated: 0,
            };
            match zone.read() {
                Ok(_) => zones.push(zone),
                Err(e) => last_err = Some(e),
            }
        }
        if zones.is_empty() {
            return Err(last_err.unwrap_or_else(|| {
                ProbeError::Unavailable(format!("no readable package zones under {}", base.display()))
            }));
        }

        let spec = CounterSpec::new(POWERCAP_WIDTH_BITS, POWERCAP_UNIT_JOULES)?;
        let mut caps = ProbeCapabilities::new(Platform::Linux, vendor);
        for z in &zones {
            caps.metrics.push(MetricDescriptor::energy(&z.metric, Domain::Package, spec)?);
        }
        caps.retain_supported();
        Ok(Self {
            zones,
            caps,
            epoch: Instant::now(),
        })
    }
}

impl Probe for PowercapProbe {
    fn name(&self) -> &str {
        "powercap"
    }

    fn capabilities(&self) -> &ProbeCapabilities {
        &self.caps
    }

    fn read_counter(&mut self, metric: &MetricDescriptor) -> Result<RawCounterReading, ProbeError> {
        let zone = self
            .zones
            .iter_mut()
            .find(|z| z.metric == metric.name)
            .ok_or_else(|| ProbeError::UnsupportedMetric(metric.name.clone()))?;
        let raw = zone.read()?;
        let ts = self.epoch.elapsed().as_nanos() as u64;
        Ok(RawCounterReading::new(raw, POWERCAP_WIDTH_BITS, POWERCAP_UNIT_JOULES, ts)?)
    }
}
