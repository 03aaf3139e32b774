#![no_main]

use jointsmooth::data::parse_csv_line;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(line) = std::str::from_utf8(data) {
        if let Ok(row) = parse_csv_line(line) {
            assert!(!row.is_empty() && row.iter().all(|v| v.is_finite()));
        }
    }
});
