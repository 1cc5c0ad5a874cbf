#![no_main]

use libfuzzer_sys::fuzz_target;
use spoofgraph_core::ingest::{parse_fingerprints, IngestConfig};

fuzz_target!(|data: &[u8]| {
    let _ = parse_fingerprints(data, &IngestConfig::default());
});
