#![no_main]

use adaptcd::formats::dfm;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = dfm::decode(data) {
        // Anything accepted must re-encode to the same bytes.
        assert_eq!(dfm::encode(&map), data);
    }
});
