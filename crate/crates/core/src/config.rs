//! Run configuration: one JSON document with a section per stage, plus
//! `section.key=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::ClusterAlgorithm;
use crate::error::{Error, Result};
use crate::eval::ExperimentConfig;
use crate::gnn::GnnArchitecture;
use crate::ingest::IngestConfig;
use crate::neural::TrainConfig;
use crate::pcd::{PcdArchitecture, DEFAULT_PAIRS_PER_CLASS, DEFAULT_TARGET_SAME_FA};
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub floor: i64,
    pub num_aps: usize,
    pub test_frac: f64,
    pub val_frac: f64,
}

impl Default for IngestSection {
    fn default() -> Self {
        let c = IngestConfig::default();
        IngestSection {
            floor: c.floor,
            num_aps: c.num_aps,
            test_frac: 0.2,
            val_frac: 0.1,
        }
    }
}

impl IngestSection {
    pub fn ingest_config(&self) -> IngestConfig {
        IngestConfig {
            floor: self.floor,
            num_aps: self.num_aps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcdSection {
    pub pairs_per_class: usize,
    pub val_pairs_per_class: usize,
    pub target_same_fa: f64,
    /// Minimum validation accuracy at the zero threshold reported as the gate.
    pub accuracy_gate: f64,
    pub architecture: PcdArchitecture,
    /// The `seed` field is replaced by one derived from the master seed.
    pub train: TrainConfig,
}

impl Default for PcdSection {
    fn default() -> Self {
        PcdSection {
            pairs_per_class: DEFAULT_PAIRS_PER_CLASS,
            val_pairs_per_class: 5_000,
            target_same_fa: DEFAULT_TARGET_SAME_FA,
            accuracy_gate: 0.9,
            architecture: PcdArchitecture::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnSection {
    pub train_graphs: usize,
    pub val_graphs: usize,
    pub architecture: GnnArchitecture,
    /// Speeds drawn uniformly per training graph; empty means the
    /// experiment's speed grid.
    pub speeds: Vec<f64>,
    /// The `seed` field is replaced by one derived from the master seed.
    pub train: TrainConfig,
}

impl Default for GnnSection {
    fn default() -> Self {
        GnnSection {
            train_graphs: 2_000,
            val_graphs: 500,
            architecture: GnnArchitecture::default(),
            speeds: Vec::new(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub dbscan: ClusterAlgorithm,
    pub optics: ClusterAlgorithm,
    pub birch: ClusterAlgorithm,
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            dbscan: ClusterAlgorithm::default_dbscan(),
            optics: ClusterAlgorithm::default_optics(),
            birch: ClusterAlgorithm::default_birch(),
        }
    }
}

impl BaselineSection {
    pub fn algorithms(&self) -> [ClusterAlgorithm; 3] {
        [self.dbscan, self.optics, self.birch]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for every random stream.
    pub seed: u64,
    /// Fingerprint CSV.
    pub dataset: PathBuf,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub pcd: PcdSection,
    #[serde(default)]
    pub gnn: GnnSection,
    #[serde(default)]
    pub baselines: BaselineSection,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn new(seed: u64, dataset: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            seed,
            dataset: dataset.into(),
            output_dir: output_dir.into(),
            ingest: IngestSection::default(),
            synth: SynthConfig::default(),
            pcd: PcdSection::default(),
            gnn: GnnSection::default(),
            baselines: BaselineSection::default(),
            experiment: ExperimentConfig::default(),
        }
    }

    /// Parses a config document and applies `section.key=value` overrides.
    /// Override values are read as JSON, falling back to a plain string.
    pub fn from_json_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate_values()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_with_overrides(&text, overrides)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks value ranges (not file existence).
    pub fn validate_values(&self) -> Result<()> {
        let i = &self.ingest;
        if i.num_aps == 0 {
            return Err(Error::Config("ingest.num_aps must be positive".into()));
        }
        if !(i.test_frac >= 0.0 && i.val_frac >= 0.0 && i.test_frac + i.val_frac > 0.0 && i.test_frac + i.val_frac < 1.0) {
            return Err(Error::Config("ingest: 0 < test_frac + val_frac < 1 required".into()));
        }
        self.synth.validate()?;
        let p = &self.pcd;
        if p.pairs_per_class == 0 || p.val_pairs_per_class == 0 {
            return Err(Error::Config("pcd pair counts must be positive".into()));
        }
        if !(p.target_same_fa > 0.0 && p.target_same_fa < 1.0) {
            return Err(Error::Config("pcd.target_same_fa must lie in (0, 1)".into()));
        }
        p.train.validate()?;
        let g = &self.gnn;
        if g.train_graphs < 2 || g.val_graphs == 0 {
            return Err(Error::Config("gnn needs at least 2 training graphs and 1 validation graph".into()));
        }
        if g.speeds.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Config("gnn.speeds must be non-negative".into()));
        }
        g.train.validate()?;
        for (slot, a) in ["dbscan", "optics", "birch"].iter().zip(self.baselines.algorithms()) {
            if a.name() != *slot {
                return Err(Error::Config(format!("baselines.{slot} holds a {} configuration", a.name())));
            }
            a.validate()?;
        }
        self.experiment.validate()?;
        if self.experiment.num_aps != self.ingest.num_aps {
            return Err(Error::Config(format!(
                "experiment.num_aps ({}) differs from ingest.num_aps ({})",
                self.experiment.num_aps, self.ingest.num_aps
            )));
        }
        Ok(())
    }

    /// Checks value ranges and that the dataset exists.
    pub fn validate(&self) -> Result<()> {
        self.validate_values()?;
        if !self.dataset.is_file() {
            return Err(Error::Io {
                path: self.dataset.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
            });
        }
        Ok(())
    }

    /// Training speeds for the GNN corpus.
    pub fn gnn_speeds(&self) -> Vec<f64> {
        if self.gnn.speeds.is_empty() {
            self.experiment.speed_grid.clone()
        } else {
            self.gnn.speeds.clone()
        }
    }
}

/// Applies `a.b.c=value` to a JSON document, creating objects on the way.
pub fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let spec = spec.strip_prefix("--").unwrap_or(spec);
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` must look like section.key=value")))?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("override `{spec}` has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    for k in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override `{spec}`: `{k}` is not inside an object")))?;
        node = obj.entry(k.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    node.as_object_mut()
        .ok_or_else(|| Error::Config(format!("override `{spec}` does not address an object field")))?
        .insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
