#![no_main]

use jointsmooth_cli::config::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = RunConfig::from_json(text) {
        let _ = config.validate();
        let again = RunConfig::from_json(&config.to_json()).expect("serialised config parses");
        assert_eq!(again, config);
    }
});
