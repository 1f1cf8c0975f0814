#![no_main]

use libfuzzer_sys::fuzz_target;
use wattrace::probes::smc::decode_value;

fuzz_target!(|data: &[u8]| {
    if data.len() < 4 {
        return;
    }
    let ty = [data[0], data[1], data[2], data[3]];
    let _ = decode_value(ty, &data[4..]);
});
