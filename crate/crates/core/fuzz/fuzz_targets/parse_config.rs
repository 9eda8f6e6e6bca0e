#![no_main]

use desvn_core::harness::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = ScenarioConfig::parse(text) {
        let flat = config.to_flat_string();
        let back = ScenarioConfig::parse(&flat).expect("flat form reparses");
        assert_eq!(back.to_flat_string(), flat);
    }
});
