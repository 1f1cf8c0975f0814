//! RAPL energy counters read straight from model-specific registers.
//!
//! On Linux the registers are reached through the `msr` driver's per-CPU
//! device files (`/dev/cpu/N/msr`, read at offset = register address).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::capability::{CpuVendor, Platform, ProbeCapabilities};
use super::counter::RawCounterReading;
use super::metric::{CounterSpec, Domain, MetricDescriptor};
use super::vendor::{self, RaplRegisters, ENERGY_STATUS_WIDTH_BITS};
use super::{Probe, ProbeError};

struct CounterSource {
    cpu: usize,
    register: u32,
    spec: CounterSpec,
}

/// Register access for one logical CPU.
pub trait RegisterFile: Send {
    fn read(&self, register: u32) -> std::io::Result<u64>;
    fn path(&self) -> &Path;
}

struct DeviceFile {
    path: PathBuf,
    file: File,
}

impl RegisterFile for DeviceFile {
    fn read(&self, register: u32) -> std::io::Result<u64> {
        read_register(&self.file, register)
    }

    fn path(&self) -> &Path {
        &self.path
    }
}

pub struct MsrProbe {
    files: BTreeMap<usize, Box<dyn RegisterFile>>,
    sources: BTreeMap<String, CounterSource>,
    caps: ProbeCapabilities,
    epoch: Instant,
}

#[cfg(unix)]
fn read_register(file: &File, register: u32) -> std::io::Result<u64> {
    use std::os::unix::fs::FileExt;
    let mut buf = [0u8; 8];
    file.read_exact_at(&mut buf, register as u64)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(not(unix))]
fn read_register(_file: &File, _register: u32) -> std::io::Result<u64> {
    Err(std::io::Error::new(
        std::io::ErrorKind::Unsupported,
        "MSR device files are a Linux interface",
    ))
}

/// Logical CPUs with an `msr` device node, sorted by index.
fn msr_cpus(dev_root: &Path) -> Result<Vec<(usize, PathBuf)>, ProbeError> {
    let dir = dev_root.join("cpu");
    let entries = fs::read_dir(&dir).map_err(|e| ProbeError::device(&dir, e))?;
    let mut cpus: Vec<(usize, PathBuf)> = entries
        .filter_map(Result::ok)
        .filter_map(|e| {
            let idx = e.file_name().to_str()?.parse::<usize>().ok()?;
            let path = e.path().join("msr");
            path.exists().then_some((idx, path))
        })
        .collect();
    cpus.sort();
    if cpus.is_empty() {
        return Err(ProbeError::Unavailable(format!(
            "no msr device nodes under {} (is the msr kernel module loaded?)",
            dir.display()
        )));
    }
    Ok(cpus)
}

fn package_id(sys_root: &Path, cpu: usize) -> u32 {
    let p = sys_root.join(format!("devices/system/cpu/cpu{cpu}/topology/physical_package_id"));
    fs::read_to_string(p)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0)
}

pub(crate) fn package_metric_name(package: u32, suffix: &str) -> String {
    if package == 0 {
        format!("PACKAGE_{suffix}")
    } else {
        format!("PACKAGE{package}_{suffix}")
    }
}

impl MsrProbe {
    pub fn open(dev_root: &Path, sys_root: &Path, vendor: CpuVendor) -> Result<Self, ProbeError> {
        if vendor::registers_for(vendor).is_none() {
            return Err(ProbeError::Unavailable(format!("no RAPL register map for {vendor:?} CPUs")));
        }
        let mut files: BTreeMap<usize, Box<dyn RegisterFile>> = BTreeMap::new();
        for (cpu, path) in msr_cpus(dev_root)? {
            let file = File::open(&path).map_err(|e| ProbeError::device(&path, e))?;
            files.insert(cpu, Box::new(DeviceFile { path, file }));
        }
        Self::with_registers(files, sys_root, vendor)
    }

    /// Builds the probe over already-opened register files, keyed by CPU index.
    pub fn with_registers(
        files: BTreeMap<usize, Box<dyn RegisterFile>>,
        sys_root: &Path,
        vendor: CpuVendor,
    ) -> Result<Self, ProbeError> {
        let regs: &RaplRegisters = vendor::registers_for(vendor).ok_or_else(|| {
            ProbeError::Unavailable(format!("no RAPL register map for {vendor:?} CPUs"))
        })?;
        if files.is_empty() {
            return Err(ProbeError::Unavailable("no CPUs with register access".into()));
        }
        let cpus: Vec<usize> = files.keys().copied().collect();

        let mut probe = MsrProbe {
            files,
            sources: BTreeMap::new(),
            caps: ProbeCapabilities::new(Platform::Linux, vendor),
            epoch: Instant::now(),
        };

        let mut first_cpu_of_package: BTreeMap<u32, usize> = BTreeMap::new();
        for cpu in &cpus {
            first_cpu_of_package.entry(package_id(sys_root, *cpu)).or_insert(*cpu);
        }
        for (package, cpu) in first_cpu_of_package {
            let unit = vendor::energy_unit_joules(probe.raw_register(cpu, regs.power_unit)?);
            let spec = CounterSpec::new(ENERGY_STATUS_WIDTH_BITS, unit)?;
            probe.raw_register(cpu, regs.package_energy)?;
            let name = package_metric_name(package, "ENERGY");
            probe.caps.metrics.push(MetricDescriptor::energy(&name, Domain::Package, spec)?);
            probe.sources.insert(
                name,
                CounterSource {
                    cpu,
                    register: regs.package_energy,
                    spec,
                },
            );
        }

        if let Some(core_reg) = regs.core_energy {
            for (dense, cpu) in cpus.iter().enumerate() {
                let unit = vendor::energy_unit_joules(probe.raw_register(*cpu, regs.power_unit)?);
                let spec = CounterSpec::new(ENERGY_STATUS_WIDTH_BITS, unit)?;
                if probe.raw_register(*cpu, core_reg).is_err() {
                    log::debug!("cpu{cpu}: core energy register unreadable, skipping per-core energy");
                    break;
                }
                let name = format!("CORE{dense}_ENERGY");
                probe
                    .caps
                    .metrics
                    .push(MetricDescriptor::energy(&name, Domain::Core(dense as u32), spec)?);
                probe.sources.insert(
                    name,
                    CounterSource {
                        cpu: *cpu,
                        register: core_reg,
                        spec,
                    },
                );
            }
        }
        for m in probe.caps.retain_supported() {
            probe.sources.remove(&m.name);
        }
        Ok(probe)
    }

    fn raw_register(&self, cpu: usize, register: u32) -> Result<u64, ProbeError> {
        let file = self
            .files
            .get(&cpu)
            .ok_or_else(|| ProbeError::Unavailable(format!("cpu{cpu} has no msr device")))?;
        file.read(register).map_err(|e| ProbeError::device(file.path(), e))
    }
}

impl Probe for MsrProbe {
    fn name(&self) -> &str {
        "msr"
    }

    fn capabilities(&self) -> &ProbeCapabilities {
        &self.caps
    }

    fn read_counter(&mut self, metric: &MetricDescriptor) -> Result<RawCounterReading, ProbeError> {
        let src = self
            .sources
            .get(&metric.name)
            .ok_or_else(|| ProbeError::UnsupportedMetric(metric.name.clone()))?;
        let value = self.raw_register(src.cpu, src.register)?;
        let ts = self.epoch.elapsed().as_nanos() as u64;
        Ok(RawCounterReading::new(
            vendor::energy_status_raw(value),
            src.spec.width_bits,
            src.spec.unit_joules,
            ts,
        )?)
    }
}

/// Windows reaches MSRs through a signed kernel driver that this build does
/// not ship; detection reports that instead of failing.
pub fn windows_driver_status() -> String {
    "MSR access on Windows needs a signed kernel driver exposing RDMSR; none is installed, \
     so package energy is unavailable"
        .to_string()
}
