#![no_main]

use libfuzzer_sys::fuzz_target;
use scimap_core::geocode::Gazetteer;

fuzz_target!(|data: &[u8]| {
    let _ = Gazetteer::parse(data);
});
