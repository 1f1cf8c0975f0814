//! CPU usage, core frequency and memory gauges from the operating system.

use std::collections::HashMap;

use sysinfo::{CpuRefreshKind, MemoryRefreshKind, RefreshKind, System};

use super::capability::{CpuVendor, Platform, ProbeCapabilities};
use super::metric::{Domain, MetricDescriptor, Property, Unit};
use super::{Probe, ProbeError};

#[derive(Debug, Clone, Copy)]
enum Gauge {
    CpuUsage(usize),
    CpuFrequency(usize),
    UsedMemory,
    TotalMemory,
}

pub struct OsProbe {
    sys: System,
    gauges: HashMap<String, Gauge>,
    want_frequency: bool,
    caps: ProbeCapabilities,
}

pub fn host_cpu_vendor() -> CpuVendor {
    if cfg!(all(target_os = "macos", target_arch = "aarch64")) {
        return CpuVendor::AppleArm;
    }
    let sys = System::new_with_specifics(RefreshKind::nothing().with_cpu(CpuRefreshKind::nothing()));
    sys.cpus()
        .first()
        .map(|c| CpuVendor::from_vendor_id(c.vendor_id()))
        .unwrap_or(CpuVendor::Other)
}

impl OsProbe {
    pub fn new(platform: Platform, vendor: CpuVendor) -> Result<Self, ProbeError> {
        let mut sys = System::new_with_specifics(
            RefreshKind::nothing()
                .with_cpu(CpuRefreshKind::nothing().with_cpu_usage())
                .with_memory(MemoryRefreshKind::nothing().with_ram()),
        );
        let ncpu = sys.cpus().len();
        if ncpu == 0 {
            return Err(ProbeError::Unavailable("the OS reports no CPUs".into()));
        }
        let mut caps = ProbeCapabilities::new(platform, vendor);
        let mut gauges = HashMap::new();
        let mut push = |m: MetricDescriptor, g: Gauge| {
            gauges.insert(m.name.clone(), g);
            caps.metrics.push(m);
        };
        for i in 0..ncpu {
            push(
                MetricDescriptor::gauge(format!("CPU_USAGE_{i}"), Unit::Percent, Domain::Core(i as u32))?,
                Gauge::CpuUsage(i),
            );
        }
        for i in 0..ncpu {
            push(
                MetricDescriptor::gauge(format!("CPU_FREQUENCY_{i}"), Unit::Megahertz, Domain::Core(i as u32))?,
                Gauge::CpuFrequency(i),
            );
        }
        push(
            MetricDescriptor::gauge("USED_MEMORY", Unit::Bytes, Domain::Memory)?,
            Gauge::UsedMemory,
        );
        push(
            MetricDescriptor::gauge("TOTAL_MEMORY", Unit::Bytes, Domain::Memory)?,
            Gauge::TotalMemory,
        );
        for m in caps.retain_supported() {
            gauges.remove(&m.name);
        }
        let want_frequency = caps.metrics.iter().any(|m| m.property() == Some(Property::CoreFrequency));
        if want_frequency {
            sys.refresh_cpu_frequency();
        }
        Ok(Self {
            sys,
            gauges,
            want_frequency,
            caps,
        })
    }
}

impl Probe for OsProbe {
    fn name(&self) -> &str {
        "os"
    }

    fn capabilities(&self) -> &ProbeCapabilities {
        &self.caps
    }

    fn begin_tick(&mut self) {
        self.sys.refresh_cpu_usage();
        if self.want_frequency {
            self.sys.refresh_cpu_frequency();
        }
        self.sys.refresh_memory_specifics(MemoryRefreshKind::nothing().with_ram());
    }

    fn read_gauge(&mut self, metric: &MetricDescriptor) -> Result<f64, ProbeError> {
        let gauge = *self
            .gauges
            .get(&metric.name)
            .ok_or_else(|| ProbeError::UnsupportedMetric(metric.name.clone()))?;
        let cpu = |i: usize| {
            self.sys
                .cpus()
                .get(i)
                .ok_or_else(|| ProbeError::Unavailable(format!("cpu {i} disappeared")))
        };
        Ok(match gauge {
            Gauge::CpuUsage(i) => cpu(i)?.cpu_usage() as f64,
            Gauge::CpuFrequency(i) => cpu(i)?.frequency() as f64,
            Gauge::UsedMemory => self.sys.used_memory() as f64,
            Gauge::TotalMemory => self.sys.total_memory() as f64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_per_core_usage_and_memory() {
        let mut probe = OsProbe::new(Platform::Linux, CpuVendor::Intel).unwrap();
        let usage: Vec<_> = probe
            .caps
            .metrics
            .iter()
            .filter(|m| m.name.starts_with("CPU_USAGE_"))
            .collect();
        for (i, m) in usage.iter().enumerate() {
            assert_eq!(m.domain, Domain::Core(i as u32));
        }
        assert!(!usage.is_empty());
        probe.begin_tick();
        let total = probe.read_gauge(&probe.caps.metrics.iter().find(|m| m.name == "TOTAL_MEMORY").unwrap().clone()).unwrap();
        assert!(total > 0.0);
    }

    #[test]
    fn mac_drops_core_frequency() {
        let probe = OsProbe::new(Platform::Macos, CpuVendor::AppleArm).unwrap();
        assert!(probe.caps.metrics.iter().all(|m| !m.name.starts_with("CPU_FREQUENCY")));
        assert!(probe.caps.contains("CPU_USAGE_0"));
    }
}
