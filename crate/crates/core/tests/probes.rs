use std::fs;
use std::path::Path;

use proptest::prelude::*;
use wattrace::probes::capability::cpu_property_supported;
use wattrace::probes::os::OsProbe;
use wattrace::probes::{detect_with, CpuVendor, HostConfig, Platform, Probe};

fn zone(root: &Path, dir: &str, name: &str, energy: u64) {
    let d = root.join("class/powercap").join(dir);
    fs::create_dir_all(&d).unwrap();
    fs::write(d.join("name"), format!("{name}\n")).unwrap();
    fs::write(d.join("energy_uj"), format!("{energy}\n")).unwrap();
    fs::write(d.join("max_energy_range_uj"), "262143328850\n").unwrap();
}

fn host(root: &Path) -> HostConfig {
    HostConfig {
        sys_root: root.join("sys"),
        dev_root: root.join("dev"),
        nvml_library: Some(root.join("no-nvml.so")),
        platform: Some(Platform::Linux),
        cpu_vendor: Some(CpuVendor::Intel),
        gauges: false,
        ..HostConfig::default()
    }
}

#[test]
fn falls_back_from_msr_to_powercap() {
    let dir = tempfile::tempdir().unwrap();
    zone(&dir.path().join("sys"), "intel-rapl:0", "package-0", 1000);
    zone(&dir.path().join("sys"), "intel-rapl:1", "package-1", 2000);
    let det = detect_with(&host(dir.path()));
    let names: Vec<String> = det.schema().into_iter().map(|m| m.name).collect();
    assert_eq!(names, ["PACKAGE_ENERGY", "PACKAGE1_ENERGY"]);
    let backends: Vec<&str> = det.warnings.iter().map(|w| w.backend).collect();
    assert_eq!(backends, ["msr", "nvml"]);
}

#[test]
fn nothing_available_gives_only_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let det = detect_with(&host(dir.path()));
    assert!(det.probes.is_empty());
    let backends: Vec<&str> = det.warnings.iter().map(|w| w.backend).collect();
    assert_eq!(backends, ["msr", "powercap", "nvml"]);
}

#[test]
fn gauges_survive_without_energy_backends() {
    let dir = tempfile::tempdir().unwrap();
    let mut h = host(dir.path());
    h.gauges = true;
    let det = detect_with(&h);
    let schema = det.schema();
    assert!(schema.iter().any(|m| m.name == "CPU_USAGE_0"));
    assert!(schema.iter().any(|m| m.name == "USED_MEMORY"));
    assert!(!det.warnings.is_empty());
}

fn platforms() -> impl Strategy<Value = Platform> {
    prop_oneof![Just(Platform::Linux), Just(Platform::Windows), Just(Platform::Macos)]
}

fn vendors() -> impl Strategy<Value = CpuVendor> {
    prop_oneof![
        Just(CpuVendor::Intel),
        Just(CpuVendor::Amd),
        Just(CpuVendor::AppleArm),
        Just(CpuVendor::Other)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // Whatever the host, the OS gauge backend never advertises a metric the
    // support table rules out for the claimed (OS, vendor) column.
    #[test]
    fn os_gauges_respect_the_table(platform in platforms(), vendor in vendors()) {
        let probe = OsProbe::new(platform, vendor).unwrap();
        for m in &probe.capabilities().metrics {
            let prop = m.property().unwrap();
            prop_assert!(cpu_property_supported(platform, vendor, prop), "{} on {:?}/{:?}", m.name, platform, vendor);
        }
    }
}
