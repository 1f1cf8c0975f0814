#![no_main]

use libfuzzer_sys::fuzz_target;
use wattrace::probes::smc::SmcKeyTable;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = text.parse::<SmcKeyTable>() {
        for entry in &table.entries {
            let _ = entry.metric.descriptor();
        }
    }
});
