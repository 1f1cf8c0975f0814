//! Apple System Management Controller: system, package and GPU power keys.
//!
//! Which four-character keys exist differs between Mac models, so the key set
//! is data: a [`SmcKeyTable`] that can be replaced at runtime through the
//! `WATTRACE_SMC_KEYS` file. Value decoding is portable; the IOKit connection
//! only exists on macOS.

use std::str::FromStr;

use thiserror::Error;

use super::capability::{CpuVendor, ProbeCapabilities};
use super::metric::{Domain, MetricDescriptor};
use super::{Probe, ProbeError};

pub const SMC_KEYS_ENV: &str = "WATTRACE_SMC_KEYS";

#[derive(Debug, Error, PartialEq)]
pub enum SmcError {
    #[error("line {line}: {message}")]
    Table { line: usize, message: String },
    #[error("unsupported SMC data type {0:?}")]
    UnsupportedType(String),
    #[error("SMC value of type {ty:?} needs {need} bytes, got {got}")]
    ShortValue { ty: String, need: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmcMetric {
    SystemPower,
    PackagePower,
    GpuPower(u32),
}

impl SmcMetric {
    /// The column this key feeds.
    pub fn descriptor(self) -> Result<MetricDescriptor, ProbeError> {
        Ok(match self {
            SmcMetric::SystemPower => MetricDescriptor::power("SYSTEM_POWER", Domain::System)?,
            SmcMetric::PackagePower => MetricDescriptor::power("PACKAGE_POWER", Domain::Package)?,
            SmcMetric::GpuPower(i) => MetricDescriptor::power(format!("GPU{i}_POWER"), Domain::Gpu(i))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmcKeyEntry {
    pub key: [u8; 4],
    pub metric: SmcMetric,
}

/// Ordered key candidates; the first key that exists on the machine wins for
/// each metric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmcKeyTable {
    pub entries: Vec<SmcKeyEntry>,
}

impl Default for SmcKeyTable {
    fn default() -> Self {
        DEFAULT_TABLE.parse().expect("built-in SMC key table parses")
    }
}

const DEFAULT_TABLE: &str = "\
# key  metric         [gpu index]
PSTR   system_power
PCPC   package_power
PCPG   gpu_power      0
PGTR   gpu_power      0
";

impl SmcKeyTable {
    /// Loads the table named by `WATTRACE_SMC_KEYS`, falling back to the
    /// built-in one (with a logged warning) when the file is unusable.
    pub fn from_env_or_default() -> Self {
        let Some(path) = std::env::var_os(SMC_KEYS_ENV) else {
            return Self::default();
        };
        match std::fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| t.parse::<SmcKeyTable>().map_err(|e| e.to_string()))
        {
            Ok(table) => table,
            Err(e) => {
                log::warn!("ignoring SMC key table {}: {e}", std::path::Path::new(&path).display());
                Self::default()
            }
        }
    }
}

impl FromStr for SmcKeyTable {
    type Err = SmcError;

    /// One entry per line: `KEY metric [index]`, `#` starts a comment.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| SmcError::Table { line: n + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let key: [u8; 4] = fields[0]
                .as_bytes()
                .try_into()
                .ok()
                .filter(|k: &[u8; 4]| k.iter().all(|b| b.is_ascii_graphic()))
                .ok_or_else(|| err(format!("key {:?} must be 4 ASCII characters", fields[0])))?;
            let metric = match (fields.get(1).copied(), fields.get(2)) {
                (Some("system_power"), None) => SmcMetric::SystemPower,
                (Some("package_power"), None) => SmcMetric::PackagePower,
                (Some("gpu_power"), idx) => SmcMetric::GpuPower(match idx {
                    None => 0,
                    Some(i) => i.parse().map_err(|_| err(format!("bad GPU index {i:?}")))?,
                }),
                (Some(m), _) => return Err(err(format!("unknown metric or extra fields after {m:?}"))),
                (None, _) => return Err(err("missing metric".into())),
            };
            if fields.len() > 3 {
                return Err(err("too many fields".into()));
            }
            entries.push(SmcKeyEntry { key, metric });
        }
        Ok(Self { entries })
    }
}

/// Decodes an SMC value given its four-character data type.
///
/// Supported: `flt ` (little-endian f32), `ui8 `/`ui16`/`ui32`, `si8 `/`si16`,
/// and the fixed-point families `fpXY` (unsigned) / `spXY` (signed), where
/// `Y` is the hex count of fractional bits in a big-endian 16-bit word.
pub fn decode_value(data_type: [u8; 4], bytes: &[u8]) -> Result<f64, SmcError> {
    let ty = String::from_utf8_lossy(&data_type).into_owned();
    let need = |n: usize| -> Result<(), SmcError> {
        if bytes.len() < n {
            Err(SmcError::ShortValue {
                ty: ty.clone(),
                need: n,
                got: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    match &data_type {
        b"flt " => {
            need(4)?;
            Ok(f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64)
        }
        b"ui8 " => {
            need(1)?;
            Ok(bytes[0] as f64)
        }
        b"si8 " => {
            need(1)?;
            Ok(bytes[0] as i8 as f64)
        }
        b"ui16" => {
            need(2)?;
            Ok(u16::from_be_bytes([bytes[0], bytes[1]]) as f64)
        }
        b"si16" => {
            need(2)?;
            Ok(i16::from_be_bytes([bytes[0], bytes[1]]) as f64)
        }
        b"ui32" => {
            need(4)?;
            Ok(u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as f64)
        }
        [sign @ (b'f' | b's'), b'p', int, frac] => {
            let hex = |c: u8| (c as char).to_digit(16);
            let (Some(i), Some(f)) = (hex(*int), hex(*frac)) else {
                return Err(SmcError::UnsupportedType(ty));
            };
            let signed = *sign == b's';
            if i + f + u32::from(signed) != 16 {
                return Err(SmcError::UnsupportedType(ty));
            }
            need(2)?;
            let word = [bytes[0], bytes[1]];
            let v = if signed {
                i16::from_be_bytes(word) as f64
            } else {
                u16::from_be_bytes(word) as f64
            };
            Ok(v / 2f64.powi(f as i32))
        }
        _ => Err(SmcError::UnsupportedType(ty)),
    }
}

#[repr(C)]
#[derive(Debug, Default, Clone, Copy)]
struct SmcKeyInfo {
    data_size: u32,
    data_type: u32,
    data_attributes: u8,
}

/// Layout of the structure exchanged with the AppleSMC user client.
#[repr(C)]
#[derive(Debug, Default, Clone, Copy)]
struct SmcKeyData {
    key: u32,
    vers: [u8; 6],
    p_limit: [u32; 4],
    key_info: SmcKeyInfo,
    result: u8,
    status: u8,
    data8: u8,
    data32: u32,
    bytes: [u8; 32],
}

const _: () = assert!(std::mem::size_of::<SmcKeyData>() == 80);

#[cfg(target_os = "macos")]
mod conn {
    use std::ffi::{c_char, c_void};

    use super::SmcKeyData;

    type KernReturn = i32;
    type MachPort = u32;

    const KERNEL_INDEX_SMC: u32 = 2;
    const CMD_READ_BYTES: u8 = 5;
    const CMD_READ_KEYINFO: u8 = 9;

    #[link(name = "IOKit", kind = "framework")]
    extern "C" {
        fn IOServiceMatching(name: *const c_char) -> *mut c_void;
        fn IOServiceGetMatchingService(main_port: MachPort, matching: *mut c_void) -> MachPort;
        fn IOServiceOpen(service: MachPort, owning_task: MachPort, kind: u32, connect: *mut MachPort) -> KernReturn;
        fn IOServiceClose(connect: MachPort) -> KernReturn;
        fn IOObjectRelease(object: MachPort) -> KernReturn;
        fn IOConnectCallStructMethod(
            connection: MachPort,
            selector: u32,
            input: *const c_void,
            input_size: usize,
            output: *mut c_void,
            output_size: *mut usize,
        ) -> KernReturn;
    }

    extern "C" {
        static mach_task_self_: MachPort;
    }

    pub struct Connection(MachPort);

    impl Connection {
        pub fn open() -> Result<Self, String> {
            // SAFETY: standard IOKit service lookup; the matching dictionary
            // is consumed by IOServiceGetMatchingService.
            unsafe {
                let matching = IOServiceMatching(b"AppleSMC\0".as_ptr().cast());
                let service = IOServiceGetMatchingService(0, matching);
                if service == 0 {
                    return Err("AppleSMC service not found".into());
                }
                let mut conn: MachPort = 0;
                let kr = IOServiceOpen(service, mach_task_self_, 0, &mut conn);
                IOObjectRelease(service);
                if kr != 0 {
                    return Err(format!("IOServiceOpen failed: {kr:#x}"));
                }
                Ok(Connection(conn))
            }
        }

        fn call(&self, input: &SmcKeyData) -> Result<SmcKeyData, String> {
            let mut output = SmcKeyData::default();
            let mut size = std::mem::size_of::<SmcKeyData>();
            // SAFETY: both buffers are valid SmcKeyData values of the size passed.
            let kr = unsafe {
                IOConnectCallStructMethod(
                    self.0,
                    KERNEL_INDEX_SMC,
                    (input as *const SmcKeyData).cast(),
                    std::mem::size_of::<SmcKeyData>(),
                    (&mut output as *mut SmcKeyData).cast(),
                    &mut size,
                )
            };
            if kr != 0 || output.result != 0 {
                return Err(format!("SMC call failed: kr={kr:#x} result={}", output.result));
            }
            Ok(output)
        }

        /// Returns (data type, value bytes) for `key`.
        pub fn read_key(&self, key: [u8; 4]) -> Result<([u8; 4], Vec<u8>), String> {
            let mut input = SmcKeyData {
                key: u32::from_be_bytes(key),
                data8: CMD_READ_KEYINFO,
                ..Default::default()
            };
            let info = self.call(&input)?;
            input.key_info.data_size = info.key_info.data_size;
            input.data8 = CMD_READ_BYTES;
            let out = self.call(&input)?;
            let n = (info.key_info.data_size as usize).min(out.bytes.len());
            Ok((info.key_info.data_type.to_be_bytes(), out.bytes[..n].to_vec()))
        }
    }

    impl Drop for Connection {
        fn drop(&mut self) {
            // SAFETY: closes the connection opened in `open`.
            unsafe {
                IOServiceClose(self.0);
            }
        }
    }
}

pub struct SmcProbe {
    #[cfg(target_os = "macos")]
    conn: conn::Connection,
    keys: Vec<(String, [u8; 4])>,
    caps: ProbeCapabilities,
}

impl SmcProbe {
    #[cfg(target_os = "macos")]
    pub fn open(table: &SmcKeyTable, vendor: CpuVendor) -> Result<Self, ProbeError> {
        use super::capability::{GpuVendor, Platform};
        let conn = conn::Connection::open().map_err(ProbeError::Unavailable)?;
        let mut caps = ProbeCapabilities::new(Platform::Macos, vendor);
        caps.gpu_vendors.insert(if vendor == CpuVendor::AppleArm {
            GpuVendor::Apple
        } else {
            GpuVendor::Intel
        });
        let mut keys = Vec::new();
        for entry in &table.entries {
            let metric = entry.metric.descriptor()?;
            if caps.contains(&metric.name) {
                continue;
            }
            let readable = conn
                .read_key(entry.key)
                .ok()
                .and_then(|(ty, bytes)| decode_value(ty, &bytes).ok())
                .is_some();
            if readable {
                keys.push((metric.name.clone(), entry.key));
                caps.metrics.push(metric);
            }
        }
        for m in caps.retain_supported() {
            keys.retain(|(n, _)| *n != m.name);
        }
        if caps.metrics.is_empty() {
            return Err(ProbeError::Unavailable("none of the configured SMC keys exist on this Mac".into()));
        }
        Ok(Self { conn, keys, caps })
    }

    #[cfg(not(target_os = "macos"))]
    pub fn open(_table: &SmcKeyTable, _vendor: CpuVendor) -> Result<Self, ProbeError> {
        Err(ProbeError::Unavailable("the SMC is only reachable on macOS".into()))
    }
}

impl Probe for SmcProbe {
    fn name(&self) -> &str {
        "smc"
    }

    fn capabilities(&self) -> &ProbeCapabilities {
        &self.caps
    }

    fn read_power_watts(&mut self, metric: &MetricDescriptor) -> Result<f64, ProbeError> {
        let key = self
            .keys
            .iter()
            .find(|(n, _)| *n == metric.name)
            .map(|(_, k)| *k)
            .ok_or_else(|| ProbeError::UnsupportedMetric(metric.name.clone()))?;
        #[cfg(target_os = "macos")]
        {
            let (ty, bytes) = self.conn.read_key(key).map_err(ProbeError::Unavailable)?;
            decode_value(ty, &bytes).map_err(|e| ProbeError::InvalidReading(e.to_string()))
        }
        #[cfg(not(target_os = "macos"))]
        {
            let _ = key;
            Err(ProbeError::Unavailable("the SMC is only reachable on macOS".into()))
        }
    }
}
