#![no_main]

use libfuzzer_sys::fuzz_target;
use scimap_core::ingest::read_cities;

fuzz_target!(|data: &[u8]| {
    let _ = read_cities(data);
});
