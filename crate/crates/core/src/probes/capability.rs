//! Which properties each (OS, CPU vendor) and (OS, GPU vendor) combination can
//! report, and the capability set a probe advertises.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::metric::{MetricDescriptor, Property};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    Linux,
    Windows,
    Macos,
    /// Simulated backends are exempt from the support table.
    Simulated,
}

impl Platform {
    pub fn host() -> Option<Platform> {
        if cfg!(target_os = "linux") {
            Some(Platform::Linux)
        } else if cfg!(target_os = "windows") {
            Some(Platform::Windows)
        } else if cfg!(target_os = "macos") {
            Some(Platform::Macos)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpuVendor {
    Intel,
    Amd,
    AppleArm,
    Other,
}

impl CpuVendor {
    /// Maps a CPUID vendor string (or the string reported by the OS) to a vendor.
    pub fn from_vendor_id(id: &str) -> CpuVendor {
        let id = id.trim();
        if id.eq_ignore_ascii_case("GenuineIntel") || id.to_ascii_lowercase().contains("intel") {
            CpuVendor::Intel
        } else if id.eq_ignore_ascii_case("AuthenticAMD") || id.eq_ignore_ascii_case("HygonGenuine") {
            CpuVendor::Amd
        } else if id.to_ascii_lowercase().starts_with("apple") {
            CpuVendor::AppleArm
        } else {
            CpuVendor::Other
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpuVendor {
    Nvidia,
    Amd,
    Intel,
    Apple,
}

/// CPU-side support table. Columns: Windows Intel/AMD/ARM, Linux
/// Intel/AMD/ARM, macOS Intel/ARM. `Other` vendors use the ARM column.
pub fn cpu_property_supported(platform: Platform, vendor: CpuVendor, property: Property) -> bool {
    use Property::*;
    let column = match (platform, vendor) {
        (Platform::Simulated, _) => return true,
        (Platform::Windows, CpuVendor::Intel) => 0,
        (Platform::Windows, CpuVendor::Amd) => 1,
        (Platform::Windows, _) => 2,
        (Platform::Linux, CpuVendor::Intel) => 3,
        (Platform::Linux, CpuVendor::Amd) => 4,
        (Platform::Linux, _) => 5,
        (Platform::Macos, CpuVendor::AppleArm) => 7,
        (Platform::Macos, _) => 6,
    };
    const Y: bool = true;
    const N: bool = false;
    let row: [bool; 8] = match property {
        CpuUsage => [Y, Y, Y, Y, Y, Y, Y, Y],
        PackagePower => [Y, Y, Y, Y, Y, Y, Y, N],
        SystemPower => [N, N, N, N, N, N, Y, Y],
        CoreFrequency => [Y, Y, Y, Y, Y, Y, N, N],
        CorePower => [N, N, N, N, Y, N, N, N],
        MemoryUsage => [Y, Y, Y, Y, Y, Y, Y, Y],
        GpuUsage | GpuFrequency | GpuPower => return false,
    };
    row[column]
}

/// GPU-side support table: Nvidia on Windows and Linux reports usage,
/// frequency and power; macOS GPUs (discrete AMD/Intel or Apple) report power.
pub fn gpu_property_supported(platform: Platform, vendor: GpuVendor, property: Property) -> bool {
    use Property::*;
    match (platform, property) {
        (Platform::Simulated, _) => true,
        (Platform::Windows | Platform::Linux, GpuUsage | GpuFrequency | GpuPower) => {
            vendor == GpuVendor::Nvidia
        }
        (Platform::Macos, GpuPower) => true,
        _ => false,
    }
}

/// Metrics a probe can deliver on this host.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeCapabilities {
    pub metrics: Vec<MetricDescriptor>,
    pub platform: Platform,
    pub cpu_vendor: CpuVendor,
    pub gpu_vendors: BTreeSet<GpuVendor>,
}

impl ProbeCapabilities {
    pub fn new(platform: Platform, cpu_vendor: CpuVendor) -> Self {
        Self {
            metrics: Vec::new(),
            platform,
            cpu_vendor,
            gpu_vendors: BTreeSet::new(),
        }
    }

    /// Whether `metric` sits on a supported cell for this platform column.
    pub fn allows(&self, metric: &MetricDescriptor) -> bool {
        if self.platform == Platform::Simulated {
            return true;
        }
        let Some(property) = metric.property() else {
            return false;
        };
        match property {
            Property::GpuUsage | Property::GpuFrequency | Property::GpuPower => self
                .gpu_vendors
                .iter()
                .any(|&v| gpu_property_supported(self.platform, v, property)),
            _ => cpu_property_supported(self.platform, self.cpu_vendor, property),
        }
    }

    /// Metrics outside the support table for this column.
    pub fn nonconforming(&self) -> Vec<&MetricDescriptor> {
        self.metrics.iter().filter(|m| !self.allows(m)).collect()
    }

    /// Drops unsupported metrics and returns them.
    pub fn retain_supported(&mut self) -> Vec<MetricDescriptor> {
        let (keep, drop): (Vec<_>, Vec<_>) = std::mem::take(&mut self.metrics)
            .into_iter()
            .partition(|m| self.allows(m));
        self.metrics = keep;
        drop
    }

    pub fn contains(&self, name: &str) -> bool {
        self.metrics.iter().any(|m| m.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probes::metric::{CounterSpec, Domain, Unit};

    #[test]
    fn linux_amd_has_core_power_no_system_power() {
        use Property::*;
        let p = Platform::Linux;
        let v = CpuVendor::Amd;
        assert!(cpu_property_supported(p, v, CorePower));
        assert!(cpu_property_supported(p, v, PackagePower));
        assert!(cpu_property_supported(p, v, CoreFrequency));
        assert!(!cpu_property_supported(p, v, SystemPower));
    }

    #[test]
    fn mac_arm_has_system_power_only() {
        use Property::*;
        let p = Platform::Macos;
        let v = CpuVendor::AppleArm;
        assert!(cpu_property_supported(p, v, SystemPower));
        assert!(!cpu_property_supported(p, v, PackagePower));
        assert!(!cpu_property_supported(p, v, CoreFrequency));
        assert!(cpu_property_supported(p, v, CpuUsage));
        assert!(cpu_property_supported(p, v, MemoryUsage));
    }

    #[test]
    fn intel_never_has_core_power() {
        for p in [Platform::Linux, Platform::Windows, Platform::Macos] {
            assert!(!cpu_property_supported(p, CpuVendor::Intel, Property::CorePower));
        }
    }

    #[test]
    fn gpu_table() {
        use Property::*;
        assert!(gpu_property_supported(Platform::Linux, GpuVendor::Nvidia, GpuFrequency));
        assert!(!gpu_property_supported(Platform::Linux, GpuVendor::Amd, GpuPower));
        assert!(gpu_property_supported(Platform::Macos, GpuVendor::Apple, GpuPower));
        assert!(!gpu_property_supported(Platform::Macos, GpuVendor::Apple, GpuUsage));
    }

    #[test]
    fn retain_drops_unsupported() {
        let spec = CounterSpec::new(32, 1e-6).unwrap();
        let mut caps = ProbeCapabilities::new(Platform::Linux, CpuVendor::Intel);
        caps.metrics = vec![
            MetricDescriptor::energy("PACKAGE_ENERGY", Domain::Package, spec).unwrap(),
            MetricDescriptor::energy("CORE0_ENERGY", Domain::Core(0), spec).unwrap(),
            MetricDescriptor::energy("DRAM_ENERGY", Domain::Memory, spec).unwrap(),
            MetricDescriptor::gauge("CPU_USAGE_0", Unit::Percent, Domain::Core(0)).unwrap(),
        ];
        let dropped = caps.retain_supported();
        let names: Vec<_> = dropped.iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["CORE0_ENERGY", "DRAM_ENERGY"]);
        assert!(caps.nonconforming().is_empty());
        assert_eq!(caps.metrics.len(), 2);
    }

    #[test]
    fn vendor_ids() {
        assert_eq!(CpuVendor::from_vendor_id("GenuineIntel"), CpuVendor::Intel);
        assert_eq!(CpuVendor::from_vendor_id("AuthenticAMD"), CpuVendor::Amd);
        assert_eq!(CpuVendor::from_vendor_id("Apple"), CpuVendor::AppleArm);
        assert_eq!(CpuVendor::from_vendor_id("ARM"), CpuVendor::Other);
    }
}
