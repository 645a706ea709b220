#![no_main]

use libfuzzer_sys::fuzz_target;
use scimap_core::ingest::{extract_occurrences, parse_corpus, InputFormat, ParseOptions};

fuzz_target!(|data: &[u8]| {
    if let Ok(corpus) = parse_corpus(data, InputFormat::ScopusCsv, &ParseOptions::default()) {
        let _ = extract_occurrences(&corpus.records);
    }
});
