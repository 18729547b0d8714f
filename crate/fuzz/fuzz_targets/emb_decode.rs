#![no_main]

use adaptcd::formats::embeddings;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = embeddings::decode(data) {
        let bytes = embeddings::encode(&m);
        assert_eq!(embeddings::decode(&bytes).expect("re-encoded manifest parses"), m);
    }
});
