#![no_main]

use libfuzzer_sys::fuzz_target;
use scimap_core::topslice::Fraction;

fuzz_target!(|text: &str| {
    if let Ok(f) = text.parse::<Fraction>() {
        assert!(f.ceil_of(1000) <= 1000);
    }
});
