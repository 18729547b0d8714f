#![no_main]

use adaptcd::pipeline::PipelineConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cfg) = PipelineConfig::from_json(data) {
        let _ = cfg.validate();
        PipelineConfig::from_json(&cfg.to_json()).expect("serialised config parses");
    }
});
