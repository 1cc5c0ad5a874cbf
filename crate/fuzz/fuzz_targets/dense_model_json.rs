#![no_main]

use libfuzzer_sys::fuzz_target;
use spoofgraph_core::neural::DenseNetwork;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Anything that loads must serialize back to a model that loads again.
    if let Ok(model) = DenseNetwork::from_json(text) {
        let again = model.to_json().expect("loaded model serializes");
        DenseNetwork::from_json(&again).expect("serialized model reloads");
    }
});
