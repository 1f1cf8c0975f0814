#![no_main]

use libfuzzer_sys::fuzz_target;
use wattrace::probes::powercap::{parse_counter, zone_delta_uj};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(value) = parse_counter(text) else { return };
    // Both reads inside the range: a wrapped delta never exceeds it.
    assert!(zone_delta_uj(value, value / 2, value) <= value);
    assert_eq!(zone_delta_uj(value / 2, value, value), value - value / 2);
});
