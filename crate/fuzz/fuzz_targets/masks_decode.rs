#![no_main]

use adaptcd::formats::masks;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = masks::decode(data) {
        let again = masks::decode(&masks::encode(&m)).expect("re-encoded manifest parses");
        assert_eq!(again, m);
        for inst in &m.instances {
            assert_eq!(inst.count(), inst.set_indices().count());
        }
    }
});
