//! Every decoder entry point must return `Ok` or `Err` on arbitrary input,
//! never panic. The checked-in fuzz corpus seeds are replayed here too.

use std::path::Path;

use proptest::prelude::*;
use spoofgraph_core::config::RunConfig;
use spoofgraph_core::gnn::GnnModel;
use spoofgraph_core::graph::DetectionGraph;
use spoofgraph_core::ingest::{parse_fingerprints, IngestConfig, CSV_HEADER};
use spoofgraph_core::neural::DenseNetwork;
use spoofgraph_core::pcd::PcdModel;

fn csv_row() -> impl Strategy<Value = String> {
    let field = prop_oneof![
        Just(String::new()),
        Just("100".to_string()),
        Just("NaN".to_string()),
        (-120i64..5).prop_map(|v| v.to_string()),
        (-1e3f64..1e3).prop_map(|v| v.to_string()),
        "[a-z,\"]{0,4}",
    ];
    prop::collection::vec(field, 0..CSV_HEADER.len() + 2).prop_map(|f| f.join(","))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fingerprint_csv_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = parse_fingerprints(bytes.as_slice(), &IngestConfig::default());
    }

    #[test]
    fn fingerprint_csv_with_header_never_panics(rows in prop::collection::vec(csv_row(), 0..12), aps in 0usize..8) {
        let text = format!("{}\n{}", CSV_HEADER.join(","), rows.join("\n"));
        let cfg = IngestConfig { num_aps: aps, ..IngestConfig::default() };
        let _ = parse_fingerprints(text.as_bytes(), &cfg);
    }

    #[test]
    fn model_json_never_panics(text in ".{0,256}") {
        let _ = PcdModel::from_json(&text);
        let _ = GnnModel::from_json(&text);
        let _ = DenseNetwork::from_json(&text);
    }

    #[test]
    fn edge_list_never_panics(text in "(K=[0-9]{0,6}\n)?([0-9 \n-]{0,40})") {
        let _ = DetectionGraph::parse_edge_list(&text);
    }

    #[test]
    fn edge_list_round_trips(k in 1usize..40, raw in prop::collection::vec((0usize..40, 0usize..40), 0..60)) {
        let edges: Vec<(usize, usize)> = raw.into_iter().map(|(a, b)| (a % k, b % k)).filter(|(a, b)| a != b).collect();
        let g = DetectionGraph::from_edges(k, &edges).unwrap();
        let dumped = g.to_edge_list();
        let back = DetectionGraph::parse_edge_list(&dumped).unwrap();
        prop_assert_eq!(back.num_nodes(), k);
        prop_assert_eq!(back.edges(), g.edges());
    }

    #[test]
    fn config_never_panics(text in ".{0,200}", overrides in prop::collection::vec("--[a-z_.]{0,20}=.{0,10}", 0..4)) {
        let _ = RunConfig::from_json_with_overrides(&text, &overrides);
        let _ = RunConfig::from_json_with_overrides(r#"{"seed": 1, "dataset": "x.csv"}"#, &overrides);
    }
}

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut seeds: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    seeds.sort();
    assert!(!seeds.is_empty(), "no seeds for {target}");
    seeds
}

/// Seeds named `valid_*` must decode; all others must merely not panic.
fn replay(target: &str, decode: impl Fn(&[u8]) -> bool) {
    for (name, bytes) in corpus(target) {
        let ok = decode(&bytes);
        if name.starts_with("valid_") {
            assert!(ok, "{target}/{name} should decode");
        }
    }
}

fn utf8(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap_or("")
}

#[test]
fn fuzz_corpus_seeds_replay() {
    replay("fingerprint_csv", |b| parse_fingerprints(b, &IngestConfig::default()).is_ok());
    replay("pcd_model_json", |b| PcdModel::from_json(utf8(b)).is_ok());
    replay("gnn_model_json", |b| GnnModel::from_json(utf8(b)).is_ok());
    replay("dense_model_json", |b| DenseNetwork::from_json(utf8(b)).is_ok());
    replay("edge_list", |b| DetectionGraph::parse_edge_list(utf8(b)).is_ok());
    replay("run_config", |b| {
        let text = utf8(b);
        let mut parts = text.split('\0');
        let doc = parts.next().unwrap_or_default();
        let overrides: Vec<String> = parts.map(str::to_owned).collect();
        RunConfig::from_json_with_overrides(doc, &overrides).is_ok()
    });
}
