#![no_main]

use jointsmooth::Dataset;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ds) = Dataset::parse_csv(data, "fuzz") {
        assert!(ds.n() >= 2 && ds.dim() > 0);
        assert!(ds.as_slice().iter().all(|v| v.is_finite()));
    }
});
