#![no_main]

use libfuzzer_sys::fuzz_target;
use spoofgraph_core::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Split the input into a document and override arguments.
    let mut parts = text.split('\0');
    let doc = parts.next().unwrap_or_default();
    let overrides: Vec<String> = parts.map(str::to_owned).collect();
    let _ = RunConfig::from_json_with_overrides(doc, &overrides);
});
