//! RAPL register addresses and decode rules, per CPU vendor.

use super::capability::CpuVendor;

/// Energy-status registers hold a 32-bit wrapping count in their low bits.
pub const ENERGY_STATUS_WIDTH_BITS: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RaplRegisters {
    /// Power-unit register; bits 12:8 carry the energy-status unit (ESU).
    pub power_unit: u32,
    pub package_energy: u32,
    /// Per-core energy status, read on each logical CPU.
    pub core_energy: Option<u32>,
}

pub const INTEL: RaplRegisters = RaplRegisters {
    power_unit: 0x606,
    package_energy: 0x611,
    core_energy: None,
};

pub const AMD: RaplRegisters = RaplRegisters {
    power_unit: 0xC001_0299,
    package_energy: 0xC001_029B,
    core_energy: Some(0xC001_029A),
};

pub fn registers_for(vendor: CpuVendor) -> Option<&'static RaplRegisters> {
    match vendor {
        CpuVendor::Intel => Some(&INTEL),
        CpuVendor::Amd => Some(&AMD),
        CpuVendor::AppleArm | CpuVendor::Other => None,
    }
}

pub fn energy_status_unit(power_unit_register: u64) -> u32 {
    ((power_unit_register >> 8) & 0x1f) as u32
}

/// Joules per count: `2^-ESU`.
pub fn energy_unit_joules(power_unit_register: u64) -> f64 {
    2f64.powi(-(energy_status_unit(power_unit_register) as i32))
}

pub fn energy_status_raw(register: u64) -> u64 {
    register & 0xFFFF_FFFF
}
