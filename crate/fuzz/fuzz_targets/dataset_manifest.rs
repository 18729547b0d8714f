#![no_main]

use adaptcd::eval::DatasetManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = DatasetManifest::from_json(data) {
        assert!(!m.pairs.is_empty());
    }
});
