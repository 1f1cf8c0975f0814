#![no_main]

use libfuzzer_sys::fuzz_target;
use wattrace::trace::{read_csv_str, summarize, write_csv_string};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(trace) = read_csv_str(text) else { return };
    // Anything accepted must survive a write/read cycle unchanged.
    let again = read_csv_str(&write_csv_string(&trace)).expect("re-read written trace");
    assert_eq!(again.schema, trace.schema);
    assert_eq!(again.rows.len(), trace.rows.len());
    let _ = summarize(&trace);
});
