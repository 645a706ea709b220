#![no_main]

use libfuzzer_sys::fuzz_target;
use scimap_core::emit::parse_geojson;

fuzz_target!(|text: &str| {
    if let Ok(circles) = parse_geojson(text) {
        for c in circles {
            assert!(c.latitude.abs() <= 90.0 && c.longitude.abs() <= 180.0);
        }
    }
});
