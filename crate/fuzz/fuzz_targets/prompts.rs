#![no_main]

use adaptcd::identify::TextPrototypes;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = TextPrototypes::from_json(data) {
        assert!(p.validate().is_ok());
    }
});
