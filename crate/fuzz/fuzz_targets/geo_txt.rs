#![no_main]

use libfuzzer_sys::fuzz_target;
use scimap_core::geocode::read_geo;

fuzz_target!(|data: &[u8]| {
    let _ = read_geo(data);
});
