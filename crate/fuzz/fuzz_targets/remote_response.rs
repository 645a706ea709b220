#![no_main]

use libfuzzer_sys::fuzz_target;
use scimap_core::geocode::decode_response;

fuzz_target!(|input: (u8, &str)| {
    let (expected, body) = input;
    if let Ok(points) = decode_response(body, expected as usize) {
        assert_eq!(points.len(), expected as usize);
    }
});
