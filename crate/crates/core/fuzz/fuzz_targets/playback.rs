#![no_main]

use libfuzzer_sys::fuzz_target;
use wattrace::probes::simulated::{parse_playback, Profile};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(points) = parse_playback(text) else { return };
    if let Ok(profile) = Profile::playback(points) {
        let e = profile.energy_until(5.0);
        assert!(!e.is_nan());
    }
});
