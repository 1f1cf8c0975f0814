//! Nvidia GPUs through the NVML shared library, bound at runtime so the tool
//! still starts on machines without the driver.

use std::ffi::{c_int, c_uint, c_void, OsStr};
use std::path::Path;

use libloading::Library;

use super::capability::{CpuVendor, GpuVendor, Platform, ProbeCapabilities};
use super::metric::{Domain, MetricDescriptor, Unit};
use super::{Probe, ProbeError};

type NvmlReturn = c_int;
type Device = *mut c_void;

const NVML_SUCCESS: NvmlReturn = 0;
const NVML_CLOCK_GRAPHICS: c_int = 0;

#[repr(C)]
#[derive(Default)]
struct Utilization {
    gpu: c_uint,
    memory: c_uint,
}

#[cfg(windows)]
const DEFAULT_LIBRARY: &str = "nvml.dll";
#[cfg(not(windows))]
const DEFAULT_LIBRARY: &str = "libnvidia-ml.so.1";

struct Api {
    init: unsafe extern "C" fn() -> NvmlReturn,
    shutdown: unsafe extern "C" fn() -> NvmlReturn,
    device_count: unsafe extern "C" fn(*mut c_uint) -> NvmlReturn,
    handle_by_index: unsafe extern "C" fn(c_uint, *mut Device) -> NvmlReturn,
    power_usage: unsafe extern "C" fn(Device, *mut c_uint) -> NvmlReturn,
    utilization: unsafe extern "C" fn(Device, *mut Utilization) -> NvmlReturn,
    clock_info: unsafe extern "C" fn(Device, c_int, *mut c_uint) -> NvmlReturn,
    // Keeps the function pointers above valid.
    _lib: Library,
}

impl Api {
    fn load(name: &OsStr) -> Result<Self, ProbeError> {
        let unavailable = |e: libloading::Error| ProbeError::Unavailable(format!("NVML: {e}"));
        // SAFETY: loading the vendor library runs its initializers; NVML has
        // no unusual requirements there.
        let lib = unsafe { Library::new(name) }.map_err(unavailable)?;
        // SAFETY: signatures follow nvml.h for the versioned entry points.
        unsafe {
            Ok(Api {
                init: *lib.get(b"nvmlInit_v2\0").map_err(unavailable)?,
                shutdown: *lib.get(b"nvmlShutdown\0").map_err(unavailable)?,
                device_count: *lib.get(b"nvmlDeviceGetCount_v2\0").map_err(unavailable)?,
                handle_by_index: *lib.get(b"nvmlDeviceGetHandleByIndex_v2\0").map_err(unavailable)?,
                power_usage: *lib.get(b"nvmlDeviceGetPowerUsage\0").map_err(unavailable)?,
                utilization: *lib.get(b"nvmlDeviceGetUtilizationRates\0").map_err(unavailable)?,
                clock_info: *lib.get(b"nvmlDeviceGetClockInfo\0").map_err(unavailable)?,
                _lib: lib,
            })
        }
    }
}

fn check(code: NvmlReturn, what: &str) -> Result<(), ProbeError> {
    if code == NVML_SUCCESS {
        Ok(())
    } else {
        Err(ProbeError::Unavailable(format!("NVML {what} failed with code {code}")))
    }
}

#[derive(Debug, Clone, Copy)]
enum Reading {
    Power,
    Usage,
    Frequency,
}

pub struct NvmlProbe {
    api: Api,
    devices: Vec<Device>,
    routes: Vec<(String, usize, Reading)>,
    caps: ProbeCapabilities,
}

// SAFETY: NVML is thread-safe and device handles are opaque identifiers that
// stay valid until nvmlShutdown; the probe is only ever used from one thread
// at a time.
unsafe impl Send for NvmlProbe {}

impl NvmlProbe {
    /// Opens NVML and enumerates every GPU. Metrics a device cannot report are
    /// left out and described in the returned warnings.
    pub fn open(
        library: Option<&Path>,
        platform: Platform,
        vendor: CpuVendor,
    ) -> Result<(Self, Vec<String>), ProbeError> {
        let name = library.map(Path::as_os_str).unwrap_or(OsStr::new(DEFAULT_LIBRARY));
        let api = Api::load(name)?;
        // SAFETY: FFI calls with valid out-pointers.
        unsafe { check((api.init)(), "init")? };
        let mut probe = NvmlProbe {
            api,
            devices: Vec::new(),
            routes: Vec::new(),
            caps: ProbeCapabilities::new(platform, vendor),
        };
        probe.caps.gpu_vendors.insert(GpuVendor::Nvidia);

        let mut count: c_uint = 0;
        unsafe { check((probe.api.device_count)(&mut count), "device count")? };
        let mut warnings = Vec::new();
        for index in 0..count {
            let mut dev: Device = std::ptr::null_mut();
            if let Err(e) = unsafe { check((probe.api.handle_by_index)(index, &mut dev), "device handle") } {
                warnings.push(format!("GPU {index}: {e}"));
                continue;
            }
            let slot = probe.devices.len();
            probe.devices.push(dev);
            let i = index;
            for (reading, metric) in [
                (Reading::Power, MetricDescriptor::power(format!("GPU{i}_POWER"), Domain::Gpu(i))?),
                (
                    Reading::Usage,
                    MetricDescriptor::gauge(format!("GPU{i}_USAGE"), Unit::Percent, Domain::Gpu(i))?,
                ),
                (
                    Reading::Frequency,
                    MetricDescriptor::gauge(format!("GPU{i}_FREQUENCY"), Unit::Megahertz, Domain::Gpu(i))?,
                ),
            ] {
                match probe.read(slot, reading) {
                    Ok(_) => {
                        probe.routes.push((metric.name.clone(), slot, reading));
                        probe.caps.metrics.push(metric);
                    }
                    Err(e) => warnings.push(format!("{}: {e}", metric.name)),
                }
            }
        }
        for m in probe.caps.retain_supported() {
            probe.routes.retain(|(n, _, _)| *n != m.name);
        }
        Ok((probe, warnings))
    }

    fn read(&self, slot: usize, reading: Reading) -> Result<f64, ProbeError> {
        let dev = self.devices[slot];
        // SAFETY: `dev` came from nvmlDeviceGetHandleByIndex_v2 and NVML is
        // still initialized; out-pointers are valid locals.
        unsafe {
            match reading {
                Reading::Power => {
                    let mut mw: c_uint = 0;
                    check((self.api.power_usage)(dev, &mut mw), "power usage")?;
                    Ok(mw as f64 / 1000.0)
                }
                Reading::Usage => {
                    let mut u = Utilization::default();
                    check((self.api.utilization)(dev, &mut u), "utilization")?;
                    Ok(u.gpu as f64)
                }
                Reading::Frequency => {
                    let mut mhz: c_uint = 0;
                    check((self.api.clock_info)(dev, NVML_CLOCK_GRAPHICS, &mut mhz), "clock info")?;
                    Ok(mhz as f64)
                }
            }
        }
    }

    fn route(&self, metric: &MetricDescriptor) -> Result<(usize, Reading), ProbeError> {
        self.routes
            .iter()
            .find(|(n, _, _)| *n == metric.name)
            .map(|(_, s, r)| (*s, *r))
            .ok_or_else(|| ProbeError::UnsupportedMetric(metric.name.clone()))
    }
}

impl Drop for NvmlProbe {
    fn drop(&mut self) {
        // SAFETY: paired with the successful nvmlInit_v2 in `open`.
        unsafe {
            (self.api.shutdown)();
        }
    }
}

impl Probe for NvmlProbe {
    fn name(&self) -> &str {
        "nvml"
    }

    fn capabilities(&self) -> &ProbeCapabilities {
        &self.caps
    }

    fn read_power_watts(&mut self, metric: &MetricDescriptor) -> Result<f64, ProbeError> {
        let (slot, reading) = self.route(metric)?;
        self.read(slot, reading)
    }

    fn read_gauge(&mut self, metric: &MetricDescriptor) -> Result<f64, ProbeError> {
        let (slot, reading) = self.route(metric)?;
        self.read(slot, reading)
    }
}
