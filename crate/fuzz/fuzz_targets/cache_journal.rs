#![no_main]

use libfuzzer_sys::fuzz_target;
use scimap_core::geocode::{format_journal_line, parse_journal};

fuzz_target!(|text: &str| {
    if let Ok(entries) = parse_journal(text) {
        let again: String = entries.iter().map(format_journal_line).collect();
        assert_eq!(parse_journal(&again).unwrap(), entries);
    }
});
