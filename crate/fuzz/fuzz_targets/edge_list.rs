#![no_main]

use libfuzzer_sys::fuzz_target;
use spoofgraph_core::graph::DetectionGraph;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(g) = DetectionGraph::parse_edge_list(text) {
        let dumped = g.to_edge_list();
        let again = DetectionGraph::parse_edge_list(&dumped).expect("dumped edge list parses");
        assert_eq!(again.to_edge_list(), dumped);
    }
});
