#![no_main]

use libfuzzer_sys::fuzz_target;
use scimap_core::ingest::{normalize, parse_address};

fuzz_target!(|raw: &str| {
    if let Ok(a) = parse_address("fuzz", raw) {
        assert!(!a.city.is_empty());
        assert_eq!(normalize(&a.city), a.city);
    }
});
