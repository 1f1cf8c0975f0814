#![no_main]

use libfuzzer_sys::fuzz_target;
use wattrace::cli::parse_args;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let argv = std::iter::once("wattrace").chain(text.split('\0'));
    let _ = parse_args(argv);
});
