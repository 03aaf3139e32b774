#![no_main]

use jointsmooth::jsf::Manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = serde_json::from_slice::<Manifest>(data) {
        let text = serde_json::to_string(&m).expect("manifest serialises");
        let _: Manifest = serde_json::from_str(&text).expect("serialised manifest parses");
    }
});
