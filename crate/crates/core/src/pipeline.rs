//! End-to-end stages driven by a [`RunConfig`]: ingestion, detector training,
//! experiments, and the files and manifests they leave in the output
//! directory.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::baselines::ClusterDetector;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{achieved_pfa, run_pd_sweep, run_roc, Detector, ExperimentConfig, RocCurve, SweepAxis, SweepTable};
use crate::gnn::{gnn_forward, train_gnn, GnnModel};
use crate::graph::{build_graph, DetectionGraph};
use crate::ingest::{load_fingerprints, split_locations, FingerprintDataset, Split};
use crate::neural::{LossHistory, TrainConfig};
use crate::pcd::{build_pair_dataset, calibrate_pcd_threshold, pair_accuracy, train_pcd, PcdModel};
use crate::rng::{SeedTree, EVAL_H0, EVAL_H1, GNN_DATA, GNN_INIT, INGEST_SPLIT, PCD_DATA, PCD_INIT};
use crate::synth::SynthConfig;
use crate::trajectory::{gen_sequence, Hypothesis, ScenarioConfig};

pub const PCD_FILE: &str = "pcd.json";
pub const GNN_FILE: &str = "gnn.json";

/// Every named stream derived from the master seed.
pub const STREAMS: [&str; 7] = [INGEST_SPLIT, PCD_DATA, PCD_INIT, GNN_DATA, GNN_INIT, EVAL_H0, EVAL_H1];

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path, missing_hint: &str) -> Result<String> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::MissingPrerequisite(format!(
            "{} not found; {missing_hint}",
            path.display()
        ))),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Loads the fingerprints and applies the seeded split.
pub fn load_dataset(cfg: &RunConfig) -> Result<FingerprintDataset> {
    cfg.validate()?;
    let ds = load_fingerprints(&cfg.dataset, &cfg.ingest.ingest_config())?;
    split_locations(
        ds,
        cfg.ingest.test_frac,
        cfg.ingest.val_frac,
        SeedTree::new(cfg.seed).seed(INGEST_SPLIT, 0),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApSummary {
    pub ap_id: u64,
    pub mean_dbm: f64,
    pub min_dbm: f64,
    pub max_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub floor: i64,
    pub num_locations: usize,
    pub train_locations: usize,
    pub val_locations: usize,
    pub test_locations: usize,
    /// Selected receivers with their RSS range over the retained locations.
    pub receivers: Vec<ApSummary>,
}

pub fn ingest_summary(ds: &FingerprintDataset, floor: i64) -> IngestSummary {
    let receivers = ds
        .selected_aps
        .iter()
        .enumerate()
        .map(|(j, &ap_id)| {
            let v: Vec<f64> = ds.locations.iter().map(|l| crate::ingest::watts_to_dbm(l.true_rss[j])).collect();
            ApSummary {
                ap_id,
                mean_dbm: v.iter().sum::<f64>() / v.len() as f64,
                min_dbm: v.iter().copied().fold(f64::INFINITY, f64::min),
                max_dbm: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    IngestSummary {
        floor,
        num_locations: ds.len(),
        train_locations: ds.split.train.len(),
        val_locations: ds.split.val.len(),
        test_locations: ds.split.test.len(),
        receivers,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcdReport {
    pub num_samples: usize,
    pub train_pairs_per_class: usize,
    pub val_pairs_per_class: usize,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    /// Validation-pair accuracy when "different" means statistic > 0.
    pub val_accuracy: f64,
    pub accuracy_gate: f64,
    pub gate_passed: bool,
    pub threshold: f64,
    pub target_same_fa: f64,
}

/// Trains and calibrates the position-change detector on synthesized pairs
/// from the training split, validating on the validation split.
pub fn train_pcd_stage(ds: &FingerprintDataset, cfg: &RunConfig, synth: &SynthConfig, tree: &SeedTree) -> Result<(PcdModel, LossHistory, PcdReport)> {
    let p = &cfg.pcd;
    let train_pairs = build_pair_dataset(ds, synth, p.pairs_per_class, Split::Train, tree.seed(PCD_DATA, 0))?;
    let val_pairs = build_pair_dataset(ds, synth, p.val_pairs_per_class, Split::Val, tree.seed(PCD_DATA, 1))?;
    let train_cfg = TrainConfig {
        seed: tree.seed(PCD_INIT, 0),
        ..p.train
    };
    let (mut model, history) = train_pcd(&train_pairs, &val_pairs, &p.architecture, &train_cfg)?;
    drop(train_pairs);
    let val_accuracy = pair_accuracy(&model, &val_pairs, 0.0)?;
    let threshold = calibrate_pcd_threshold(&model, &val_pairs.same, p.target_same_fa)?;
    model.set_threshold(threshold)?;
    let report = PcdReport {
        num_samples: synth.samples_per_frame,
        train_pairs_per_class: p.pairs_per_class,
        val_pairs_per_class: p.val_pairs_per_class,
        best_epoch: history.best_epoch,
        best_val_loss: history.best_val_loss,
        val_accuracy,
        accuracy_gate: p.accuracy_gate,
        gate_passed: val_accuracy >= p.accuracy_gate,
        threshold,
        target_same_fa: p.target_same_fa,
    };
    Ok((model, history, report))
}

/// Balanced labelled graphs from one split; speeds drawn uniformly from
/// `speeds`. Graph `i` is H0 for even `i` and H1 otherwise.
#[allow(clippy::too_many_arguments)]
pub fn build_corpus(
    ds: &FingerprintDataset,
    split: Split,
    pcd: &PcdModel,
    exp: &ExperimentConfig,
    synth: &SynthConfig,
    speeds: &[f64],
    count: usize,
    tree: &SeedTree,
) -> Result<Vec<(DetectionGraph, Hypothesis)>> {
    if speeds.is_empty() {
        return Err(Error::Config("no speeds to draw training scenarios from".into()));
    }
    let synth = exp.synth(synth);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let hypothesis = if i % 2 == 0 { Hypothesis::H0 } else { Hypothesis::H1 };
            let speed = speeds[tree.stream("speed", i as u64).gen_range(0..speeds.len())];
            let scenario = ScenarioConfig {
                num_frames: exp.num_frames,
                frame_rate: exp.frame_rate,
                speed,
                hypothesis,
                seed: tree.seed("scenario", i as u64),
            };
            let frames = gen_sequence(ds, split, &scenario, &synth)?;
            Ok((build_graph(&frames, pcd)?, hypothesis))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnReport {
    pub num_frames: usize,
    pub num_samples: usize,
    pub train_graphs: usize,
    pub val_graphs: usize,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub val_auc: f64,
    /// Validation accuracy of "H1 iff statistic > 0".
    pub val_accuracy: f64,
}

/// Trains the graph network on training-split scenarios, validating on
/// validation-split scenarios.
pub fn train_gnn_stage(
    ds: &FingerprintDataset,
    pcd: &PcdModel,
    cfg: &RunConfig,
    exp: &ExperimentConfig,
    synth: &SynthConfig,
    tree: &SeedTree,
) -> Result<(GnnModel, LossHistory, GnnReport)> {
    let speeds = cfg.gnn_speeds();
    let train = build_corpus(ds, Split::Train, pcd, exp, synth, &speeds, cfg.gnn.train_graphs, &tree.child(GNN_DATA, 0))?;
    let val = build_corpus(ds, Split::Val, pcd, exp, synth, &speeds, cfg.gnn.val_graphs, &tree.child(GNN_DATA, 1))?;
    let train_cfg = TrainConfig {
        seed: tree.seed(GNN_INIT, 0),
        ..cfg.gnn.train
    };
    let (model, history) = train_gnn(&train, &val, &cfg.gnn.architecture, &train_cfg)?;
    let stats = val.par_iter().map(|(g, _)| gnn_forward(&model, g)).collect::<Result<Vec<f64>>>()?;
    let split_by = |h: Hypothesis| -> Vec<f64> { stats.iter().zip(&val).filter(|(_, (_, l))| *l == h).map(|(s, _)| *s).collect() };
    let (h0, h1) = (split_by(Hypothesis::H0), split_by(Hypothesis::H1));
    let val_auc = if h0.is_empty() || h1.is_empty() {
        f64::NAN
    } else {
        RocCurve::from_scores(&h0, &h1)?.auc
    };
    let correct = stats.iter().zip(&val).filter(|(s, (_, l))| (**s > 0.0) == (*l == Hypothesis::H1)).count();
    let report = GnnReport {
        num_frames: exp.num_frames,
        num_samples: synth.samples_per_frame,
        train_graphs: train.len(),
        val_graphs: val.len(),
        best_epoch: history.best_epoch,
        best_val_loss: history.best_val_loss,
        val_auc,
        val_accuracy: correct as f64 / val.len() as f64,
    };
    Ok((model, history, report))
}

pub fn baseline_detectors(cfg: &RunConfig) -> Result<Vec<Detector>> {
    cfg.baselines
        .algorithms()
        .into_iter()
        .map(|a| Ok(Detector::Cluster(ClusterDetector::new(a)?)))
        .collect()
}

/// Synthesis settings at the experiment's sample count.
pub fn experiment_synth(cfg: &RunConfig) -> SynthConfig {
    cfg.experiment.synth(&cfg.synth)
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn write_manifest(cfg: &RunConfig, command: &str, models: serde_json::Value, outputs: &[PathBuf], summary: serde_json::Value) -> Result<PathBuf> {
    let files = outputs
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
            Ok(json!({
                "file": p.file_name().map(|f| f.to_string_lossy().into_owned()),
                "sha256": sha256_hex(&bytes),
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = json!({
        "command": command,
        "master_seed": cfg.seed,
        "streams": STREAMS,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "models": models,
        "outputs": files,
        "summary": summary,
    });
    let path = out(cfg, &format!("manifest_{}.json", command.replace(' ', "_")));
    write_file(&path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(path)
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<IngestSummary> {
    let ds = load_dataset(cfg)?;
    let summary = ingest_summary(&ds, cfg.ingest.floor);
    let split = out(cfg, "split.csv");
    let mut buf = Vec::new();
    ds.write_split_csv(&mut buf)?;
    write_file(&split, &buf)?;
    let summary_path = out(cfg, "ingest_summary.json");
    write_file(&summary_path, serde_json::to_string_pretty(&summary)?.as_bytes())?;
    write_manifest(cfg, "ingest", json!({}), &[split, summary_path], serde_json::to_value(&summary)?)?;
    Ok(summary)
}

pub fn cmd_train_pcd(cfg: &RunConfig) -> Result<PcdReport> {
    let ds = load_dataset(cfg)?;
    let (model, history, report) = train_pcd_stage(&ds, cfg, &cfg.synth, &SeedTree::new(cfg.seed))?;
    let paths = [out(cfg, PCD_FILE), out(cfg, "pcd_loss.csv"), out(cfg, "pcd_report.json")];
    let model_json = model.to_json()?;
    write_file(&paths[0], model_json.as_bytes())?;
    write_file(&paths[1], history.to_csv().as_bytes())?;
    write_file(&paths[2], serde_json::to_string_pretty(&report)?.as_bytes())?;
    write_manifest(cfg, "train pcd", json!({ "pcd": sha256_hex(model_json.as_bytes()) }), &paths, serde_json::to_value(&report)?)?;
    Ok(report)
}

const PCD_HINT: &str = "run `spoofgraph train pcd` with the same config first";
const GNN_HINT: &str = "run `spoofgraph train gnn` with the same config first";

pub fn load_pcd(cfg: &RunConfig) -> Result<(PcdModel, String)> {
    let text = read_file(&out(cfg, PCD_FILE), PCD_HINT)?;
    let model = PcdModel::from_json(&text)?;
    model.threshold()?;
    Ok((model, sha256_hex(text.as_bytes())))
}

pub fn load_gnn(cfg: &RunConfig) -> Result<(GnnModel, String)> {
    let text = read_file(&out(cfg, GNN_FILE), GNN_HINT)?;
    Ok((GnnModel::from_json(&text)?, sha256_hex(text.as_bytes())))
}

pub fn cmd_train_gnn(cfg: &RunConfig) -> Result<GnnReport> {
    let (pcd, pcd_hash) = load_pcd(cfg)?;
    let ds = load_dataset(cfg)?;
    let (model, history, report) = train_gnn_stage(&ds, &pcd, cfg, &cfg.experiment, &cfg.synth, &SeedTree::new(cfg.seed))?;
    let paths = [out(cfg, GNN_FILE), out(cfg, "gnn_loss.csv"), out(cfg, "gnn_report.json")];
    let model_json = model.to_json()?;
    write_file(&paths[0], model_json.as_bytes())?;
    write_file(&paths[1], history.to_csv().as_bytes())?;
    write_file(&paths[2], serde_json::to_string_pretty(&report)?.as_bytes())?;
    let models = json!({ "pcd": pcd_hash, "gnn": sha256_hex(model_json.as_bytes()) });
    write_manifest(cfg, "train gnn", models, &paths, serde_json::to_value(&report)?)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Roc,
    Speed,
    Frames,
    Samples,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Roc => "roc",
            Experiment::Speed => "speed",
            Experiment::Frames => "frames",
            Experiment::Samples => "samples",
        }
    }

    pub fn axis(self) -> Option<SweepAxis> {
        match self {
            Experiment::Roc => None,
            Experiment::Speed => Some(SweepAxis::Speed),
            Experiment::Frames => Some(SweepAxis::NumFrames),
            Experiment::Samples => Some(SweepAxis::NumSamples),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub detector: String,
    pub auc: f64,
    pub threshold: f64,
    pub pd_at_target_pfa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluateOutcome {
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub roc: Vec<RocSummary>,
    pub sweep: Option<SweepTable>,
}

/// ROC of the graph detector and every baseline on shared trials.
pub fn evaluate_roc(cfg: &RunConfig, ds: &FingerprintDataset, pcd: &PcdModel, gnn: &GnnModel) -> Result<(Vec<PathBuf>, Vec<RocSummary>)> {
    let mut detectors = vec![Detector::Gsd {
        pcd: pcd.clone(),
        gnn: gnn.clone(),
    }];
    detectors.extend(baseline_detectors(cfg)?);
    let results = run_roc(ds, &detectors, &cfg.experiment, &cfg.synth, cfg.seed)?;
    let mut outputs = Vec::new();
    let mut summary = Vec::new();
    for r in &results {
        let path = out(cfg, &format!("roc_{}.csv", r.detector));
        let mut buf = Vec::new();
        r.curve.write_csv(&mut buf)?;
        write_file(&path, &buf)?;
        outputs.push(path);
        summary.push(RocSummary {
            detector: r.detector.clone(),
            auc: r.curve.auc,
            threshold: r.threshold,
            pd_at_target_pfa: r.pd_at_target,
        });
    }
    Ok((outputs, summary))
}

pub fn cmd_evaluate(cfg: &RunConfig, experiment: Experiment) -> Result<EvaluateOutcome> {
    let (pcd, pcd_hash) = load_pcd(cfg)?;
    let (gnn, gnn_hash) = load_gnn(cfg)?;
    let ds = load_dataset(cfg)?;
    let mut models = json!({ "pcd": pcd_hash, "gnn": gnn_hash });
    let command = format!("evaluate {}", experiment.name());
    let Some(axis) = experiment.axis() else {
        let (outputs, roc) = evaluate_roc(cfg, &ds, &pcd, &gnn)?;
        let manifest = write_manifest(cfg, &command, models, &outputs, serde_json::to_value(&roc)?)?;
        return Ok(EvaluateOutcome {
            outputs,
            manifest,
            roc,
            sweep: None,
        });
    };

    let baselines = baseline_detectors(cfg)?;
    let mut point_models = Vec::new();
    let table = run_pd_sweep(&ds, axis, &cfg.experiment, &cfg.synth, cfg.seed, |pi, value| {
        let point = axis.apply(&cfg.experiment, value);
        let (p, g) = sweep_models(cfg, &ds, axis, pi, &point, &pcd, &gnn)?;
        if !matches!(axis, SweepAxis::Speed) {
            let dir = format!("sweep_models/{}/{}", axis.name(), value);
            let (pj, gj) = (p.to_json()?, g.to_json()?);
            write_file(&out(cfg, &format!("{dir}/{PCD_FILE}")), pj.as_bytes())?;
            write_file(&out(cfg, &format!("{dir}/{GNN_FILE}")), gj.as_bytes())?;
            point_models.push(json!({ "value": value, "pcd": sha256_hex(pj.as_bytes()), "gnn": sha256_hex(gj.as_bytes()) }));
        }
        let mut d = vec![Detector::Gsd { pcd: p, gnn: g }];
        d.extend(baselines.iter().cloned());
        Ok(d)
    })?;
    models["sweep_points"] = json!(point_models);
    let path = out(cfg, &format!("pd_vs_{}.csv", axis.name()));
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    write_file(&path, &buf)?;
    let outputs = vec![path];
    let summary = json!({ "skipped": table.skipped });
    let manifest = write_manifest(cfg, &command, models, &outputs, summary)?;
    Ok(EvaluateOutcome {
        outputs,
        manifest,
        roc: Vec::new(),
        sweep: Some(table),
    })
}

/// Models for one sweep point. Speed reuses the trained models; a different
/// frame count retrains the graph network; a different sample count retrains
/// both networks. Points equal to the base configuration reuse the base
/// models.
pub fn sweep_models(
    cfg: &RunConfig,
    ds: &FingerprintDataset,
    axis: SweepAxis,
    point_index: usize,
    point: &ExperimentConfig,
    pcd: &PcdModel,
    gnn: &GnnModel,
) -> Result<(PcdModel, GnnModel)> {
    let tree = SeedTree::new(cfg.seed).child(&format!("sweep/{}/models", axis.name()), point_index as u64);
    match axis {
        SweepAxis::Speed => Ok((pcd.clone(), gnn.clone())),
        SweepAxis::NumFrames if point.num_frames == cfg.experiment.num_frames => Ok((pcd.clone(), gnn.clone())),
        SweepAxis::NumFrames => {
            let (g, _, _) = train_gnn_stage(ds, pcd, cfg, point, &cfg.synth, &tree)?;
            Ok((pcd.clone(), g))
        }
        SweepAxis::NumSamples if point.num_samples == cfg.synth.samples_per_frame => Ok((pcd.clone(), gnn.clone())),
        SweepAxis::NumSamples => {
            let synth = SynthConfig {
                samples_per_frame: point.num_samples,
                ..cfg.synth
            };
            let (p, _, _) = train_pcd_stage(ds, cfg, &synth, &tree)?;
            let (g, _, _) = train_gnn_stage(ds, &p, cfg, point, &synth, &tree)?;
            Ok((p, g))
        }
    }
}

/// Edge list of the detection graph for one scenario of the test split.
pub fn cmd_inspect_graph(cfg: &RunConfig, scenario_seed: u64, hypothesis: Hypothesis) -> Result<String> {
    let (pcd, _) = load_pcd(cfg)?;
    let ds = load_dataset(cfg)?;
    let scenario = cfg.experiment.scenario(hypothesis, scenario_seed);
    let frames = gen_sequence(&ds, Split::Test, &scenario, &experiment_synth(cfg))?;
    Ok(build_graph(&frames, &pcd)?.to_edge_list())
}

/// Empirical Pfa of fixed thresholds on fresh H0 trials, per detector.
pub fn fresh_h0_pfa(cfg: &RunConfig, ds: &FingerprintDataset, detectors: &[(Detector, f64)]) -> Result<Vec<f64>> {
    achieved_pfa(ds, detectors, &cfg.experiment, &cfg.synth, cfg.seed)
}
