#![no_main]

use libfuzzer_sys::fuzz_target;
use scimap_core::emit::parse_gps_text;

fuzz_target!(|text: &str| {
    let _ = parse_gps_text(text);
});
