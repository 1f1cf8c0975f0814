#![no_main]

use libfuzzer_sys::fuzz_target;
use wattrace::probes::simulated::{ProfileSpec, SimulatedSource};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = text.parse::<ProfileSpec>() else { return };
    let mut state = SimulatedSource::new(&spec);
    for t in [0.0, 0.05, 1.0, 10.0] {
        let _ = state.power_at(t);
        let _ = state.energy_until(t);
    }
});
