#![no_main]

use libfuzzer_sys::fuzz_target;
use wattrace::probes::MetricDescriptor;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = MetricDescriptor::from_column_name(text) {
        let back = MetricDescriptor::from_column_name(&m.column_name()).expect("own column name parses");
        assert_eq!(back.column_name(), m.column_name());
    }
});
