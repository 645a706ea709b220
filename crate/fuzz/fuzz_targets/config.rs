#![no_main]

use libfuzzer_sys::fuzz_target;
use scimap_core::config::{parse_pairs, PipelineConfig};

fuzz_target!(|text: &str| {
    if parse_pairs(text).is_ok() {
        if let Ok(cfg) = PipelineConfig::from_text(text, None) {
            let echoed = PipelineConfig::from_text(&cfg.to_text(), None).unwrap();
            assert_eq!(echoed.to_pairs(), cfg.to_pairs());
        }
    }
});
