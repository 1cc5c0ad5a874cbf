//! Monte Carlo harness: ROC curves and detection-probability sweeps for the
//! graph-based detector and the cluster-count baselines.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{calibrate_count_threshold, cluster_count, ClusterDetector};
use crate::error::{Error, Result};
use crate::gnn::{gnn_forward, GnnModel};
use crate::graph::build_graph;
use crate::ingest::{FingerprintDataset, Split};
use crate::pcd::PcdModel;
use crate::rng::{SeedTree, EVAL_H0, EVAL_H1};
use crate::synth::SynthConfig;
use crate::trajectory::{gen_sequence, FrameSequence, Hypothesis, ScenarioConfig};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub trials_per_hypothesis: usize,
    pub frame_rate: f64,
    pub num_frames: usize,
    pub num_samples: usize,
    pub num_aps: usize,
    pub target_pfa: f64,
    pub speed: f64,
    pub speed_grid: Vec<f64>,
    pub frames_grid: Vec<usize>,
    pub samples_grid: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            trials_per_hypothesis: 500,
            frame_rate: 10.0,
            num_frames: 30,
            num_samples: 150,
            num_aps: 5,
            target_pfa: 0.1,
            speed: 1.0,
            speed_grid: vec![0.0, 0.5, 1.0, 2.0, 3.0, 5.0],
            frames_grid: vec![5, 10, 20, 30, 40, 50],
            samples_grid: vec![25, 50, 100, 150, 250],
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("experiment: {m}")));
        if self.trials_per_hypothesis == 0 || self.num_frames < 2 || self.num_samples == 0 || self.num_aps == 0 {
            return fail("trial, frame, sample and receiver counts must be positive (at least 2 frames)");
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return fail("frame_rate must be positive");
        }
        if !(self.target_pfa > 0.0 && self.target_pfa < 1.0) {
            return fail("target_pfa must lie in (0, 1)");
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return fail("speed must be non-negative");
        }
        if self.speed_grid.is_empty() || self.frames_grid.is_empty() || self.samples_grid.is_empty() {
            return fail("sweep grids must be nonempty");
        }
        if self.speed_grid.iter().any(|&v| !(v >= 0.0 && v.is_finite()))
            || self.frames_grid.iter().any(|&k| k < 2)
            || self.samples_grid.contains(&0)
        {
            return fail("sweep grid values out of range");
        }
        Ok(())
    }

    pub fn scenario(&self, hypothesis: Hypothesis, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            num_frames: self.num_frames,
            frame_rate: self.frame_rate,
            speed: self.speed,
            hypothesis,
            seed,
        }
    }

    pub fn synth(&self, base: &SynthConfig) -> SynthConfig {
        SynthConfig {
            samples_per_frame: self.num_samples,
            ..*base
        }
    }
}

/// A detector producing a scalar statistic; larger means "attack".
#[derive(Debug, Clone)]
pub enum Detector {
    Gsd { pcd: PcdModel, gnn: GnnModel },
    Cluster(ClusterDetector),
}

impl Detector {
    pub fn name(&self) -> &'static str {
        match self {
            Detector::Gsd { .. } => "gsd",
            Detector::Cluster(c) => c.name(),
        }
    }

    pub fn statistic(&self, frames: &FrameSequence) -> Result<f64> {
        match self {
            Detector::Gsd { pcd, gnn } => gnn_forward(gnn, &build_graph(frames, pcd)?),
            Detector::Cluster(c) => Ok(cluster_count(c, frames)? as f64),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Detector::Cluster(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(pfa, pd)` sorted by pfa then pd.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// Empirical ROC of the rule "H1 iff statistic > t" over every observed
    /// threshold, with trapezoidal area.
    pub fn from_scores(h0: &[f64], h1: &[f64]) -> Result<Self> {
        if h0.is_empty() || h1.is_empty() {
            return Err(Error::InsufficientData("ROC needs scores under both hypotheses".into()));
        }
        if h0.iter().chain(h1).any(|s| s.is_nan()) {
            return Err(Error::Numerical("NaN detection statistic".into()));
        }
        let mut s0 = h0.to_vec();
        let mut s1 = h1.to_vec();
        s0.sort_by(f64::total_cmp);
        s1.sort_by(f64::total_cmp);
        let mut thresholds: Vec<f64> = s0.iter().chain(&s1).copied().collect();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        let above = |s: &[f64], t: f64| (s.len() - s.partition_point(|&v| v <= t)) as f64 / s.len() as f64;
        let mut points = vec![(1.0, 1.0)];
        points.extend(thresholds.iter().map(|&t| (above(&s0, t), above(&s1, t))));
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        points.dedup();
        let auc = points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum::<f64>()
            .clamp(0.0, 1.0);
        Ok(RocCurve { points, auc })
    }

    /// Largest Pd among operating points with Pfa at most `target`.
    pub fn pd_at_pfa(&self, target: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.0 <= target)
            .map(|p| p.1)
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::from("pfa,pd\n");
        for (pfa, pd) in &self.points {
            s.push_str(&format!("{pfa},{pd}\n"));
        }
        out.write_all(s.as_bytes()).map_err(|e| Error::io("<roc csv>", e))
    }
}

/// Smallest observed threshold whose empirical Pfa on `h0` is at most `target`.
pub fn threshold_at_pfa(h0: &[f64], target: f64) -> Result<f64> {
    if h0.is_empty() {
        return Err(Error::InsufficientData("no H0 statistics to calibrate on".into()));
    }
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Config(format!("target Pfa must lie in (0, 1), got {target}")));
    }
    let mut s = h0.to_vec();
    s.sort_by(f64::total_cmp);
    let allowed = (target * s.len() as f64).floor() as usize;
    Ok(s[s.len() - 1 - allowed.min(s.len() - 1)])
}

/// Wilson score interval for `k` successes out of `n` at 95%.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Normal-approximation 95% margin of a binomial proportion.
pub fn binomial_margin(p: f64, n: usize) -> f64 {
    Z95 * (p * (1.0 - p) / n as f64).sqrt()
}

/// Seeds of the trials of one experiment point; H0 and H1 draw from disjoint
/// named streams.
#[derive(Debug, Clone, Copy)]
pub struct TrialSeeds {
    pub tree: SeedTree,
}

impl TrialSeeds {
    pub fn new(master: u64, purpose: &str, point: u64) -> Self {
        TrialSeeds {
            tree: SeedTree::new(master).child(purpose, point),
        }
    }

    pub fn seed(&self, hypothesis: Hypothesis, trial: usize) -> u64 {
        let name = match hypothesis {
            Hypothesis::H0 => EVAL_H0,
            Hypothesis::H1 => EVAL_H1,
        };
        self.tree.seed(name, trial as u64)
    }
}

/// Generates `count` test-split sequences under `hypothesis`.
pub fn gen_trials(
    ds: &FingerprintDataset,
    cfg: &ExperimentConfig,
    synth: &SynthConfig,
    hypothesis: Hypothesis,
    seeds: &TrialSeeds,
    count: usize,
) -> Result<Vec<FrameSequence>> {
    let synth = cfg.synth(synth);
    (0..count)
        .into_par_iter()
        .map(|i| gen_sequence(ds, Split::Test, &cfg.scenario(hypothesis, seeds.seed(hypothesis, i)), &synth))
        .collect()
}

pub fn statistics(detector: &Detector, trials: &[FrameSequence]) -> Result<Vec<f64>> {
    trials.par_iter().map(|t| detector.statistic(t)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub detector: String,
    pub curve: RocCurve,
    pub h0_scores: Vec<f64>,
    pub h1_scores: Vec<f64>,
    /// Decision threshold at the target Pfa ("H1 iff statistic > threshold").
    pub threshold: f64,
    pub pd_at_target: f64,
}

/// ROC experiment: every detector scores the same H0 and H1 trials.
pub fn run_roc(ds: &FingerprintDataset, detectors: &[Detector], cfg: &ExperimentConfig, synth: &SynthConfig, master: u64) -> Result<Vec<RocResult>> {
    cfg.validate()?;
    let seeds = TrialSeeds::new(master, "roc", 0);
    let n = cfg.trials_per_hypothesis;
    let h0 = gen_trials(ds, cfg, synth, Hypothesis::H0, &seeds, n)?;
    let h1 = gen_trials(ds, cfg, synth, Hypothesis::H1, &seeds, n)?;
    detectors
        .iter()
        .map(|d| {
            let h0_scores = statistics(d, &h0)?;
            let h1_scores = statistics(d, &h1)?;
            let curve = RocCurve::from_scores(&h0_scores, &h1_scores)?;
            let threshold = detector_threshold(d, &h0_scores, cfg.target_pfa)?;
            let pd_at_target = h1_scores.iter().filter(|&&s| s > threshold).count() as f64 / n as f64;
            Ok(RocResult {
                detector: d.name().to_string(),
                curve,
                h0_scores,
                h1_scores,
                threshold,
                pd_at_target,
            })
        })
        .collect()
}

/// Threshold at `target` Pfa; integer-valued for the cluster-count detectors.
pub fn detector_threshold(detector: &Detector, h0_scores: &[f64], target: f64) -> Result<f64> {
    if detector.is_discrete() {
        let counts: Vec<usize> = h0_scores.iter().map(|&s| s as usize).collect();
        Ok(calibrate_count_threshold(&counts, target)? as f64)
    } else {
        threshold_at_pfa(h0_scores, target)
    }
}

/// Fraction of fresh H0 trials above each threshold.
pub fn achieved_pfa(ds: &FingerprintDataset, detectors: &[(Detector, f64)], cfg: &ExperimentConfig, synth: &SynthConfig, master: u64) -> Result<Vec<f64>> {
    let seeds = TrialSeeds::new(master, "fresh-h0", 0);
    let h0 = gen_trials(ds, cfg, synth, Hypothesis::H0, &seeds, cfg.trials_per_hypothesis)?;
    detectors
        .iter()
        .map(|(d, t)| {
            let s = statistics(d, &h0)?;
            Ok(s.iter().filter(|&&v| v > *t).count() as f64 / s.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Speed,
    NumFrames,
    NumSamples,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Speed => "speed",
            SweepAxis::NumFrames => "num_frames",
            SweepAxis::NumSamples => "num_samples",
        }
    }

    pub fn grid(self, cfg: &ExperimentConfig) -> Vec<f64> {
        match self {
            SweepAxis::Speed => cfg.speed_grid.clone(),
            SweepAxis::NumFrames => cfg.frames_grid.iter().map(|&k| k as f64).collect(),
            SweepAxis::NumSamples => cfg.samples_grid.iter().map(|&n| n as f64).collect(),
        }
    }

    /// The experiment configuration at one grid value.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> ExperimentConfig {
        let mut c = cfg.clone();
        match self {
            SweepAxis::Speed => c.speed = value,
            SweepAxis::NumFrames => c.num_frames = value as usize,
            SweepAxis::NumSamples => c.num_samples = value as usize,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub detector: String,
    pub pd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: String,
    pub rows: Vec<SweepRow>,
    /// Grid values that could not be simulated, with the reason.
    pub skipped: Vec<(f64, String)>,
}

impl SweepTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::from("axis,detector,pd,ci_low,ci_high\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{},{}\n", r.axis_value, r.detector, r.pd, r.ci_low, r.ci_high));
        }
        out.write_all(s.as_bytes()).map_err(|e| Error::io("<sweep csv>", e))
    }

    /// Pd of one detector along the grid.
    pub fn series(&self, detector: &str) -> Vec<(f64, f64)> {
        self.rows.iter().filter(|r| r.detector == detector).map(|r| (r.axis_value, r.pd)).collect()
    }
}

/// Pd at the target Pfa along one axis. Thresholds are re-calibrated at every
/// grid point on H0 trials independent of the H1 trials used for Pd.
/// `detectors_at(point_index, value)` supplies the detectors for each point,
/// so models may be retrained where the axis changes their inputs.
pub fn run_pd_sweep<F>(
    ds: &FingerprintDataset,
    axis: SweepAxis,
    cfg: &ExperimentConfig,
    synth: &SynthConfig,
    master: u64,
    mut detectors_at: F,
) -> Result<SweepTable>
where
    F: FnMut(usize, f64) -> Result<Vec<Detector>>,
{
    cfg.validate()?;
    let mut table = SweepTable {
        axis: axis.name().to_string(),
        ..Default::default()
    };
    let n = cfg.trials_per_hypothesis;
    for (pi, value) in axis.grid(cfg).into_iter().enumerate() {
        let point = axis.apply(cfg, value);
        let seeds = TrialSeeds::new(master, &format!("sweep/{}", axis.name()), pi as u64);
        let calib_seeds = TrialSeeds::new(master, &format!("sweep/{}/calibration", axis.name()), pi as u64);
        let trials = gen_trials(ds, &point, synth, Hypothesis::H0, &calib_seeds, n)
            .and_then(|h0| Ok((h0, gen_trials(ds, &point, synth, Hypothesis::H1, &seeds, n)?)));
        let (h0, h1) = match trials {
            Ok(t) => t,
            Err(Error::Infeasible(reason)) => {
                table.skipped.push((value, reason));
                continue;
            }
            Err(e) => return Err(e),
        };
        for d in detectors_at(pi, value)? {
            let t = detector_threshold(&d, &statistics(&d, &h0)?, point.target_pfa)?;
            let k = statistics(&d, &h1)?.iter().filter(|&&s| s > t).count();
            let (ci_low, ci_high) = wilson_interval(k, n);
            table.rows.push(SweepRow {
                axis_value: value,
                detector: d.name().to_string(),
                pd: k as f64 / n as f64,
                ci_low,
                ci_high,
            });
        }
    }
    Ok(table)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_from_seed;
    use rand::Rng;

    #[test]
    fn perfect_separation_gives_unit_auc() {
        let roc = RocCurve::from_scores(&[0.0, 0.1, 0.2], &[1.0, 2.0]).unwrap();
        assert_eq!(roc.auc, 1.0);
        assert_eq!(roc.pd_at_pfa(0.0), 1.0);
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
    }

    #[test]
    fn reversed_scores_give_zero_auc_and_ties_half() {
        assert_eq!(RocCurve::from_scores(&[5.0], &[1.0]).unwrap().auc, 0.0);
        assert_eq!(RocCurve::from_scores(&[1.0, 1.0], &[1.0]).unwrap().auc, 0.5);
    }

    #[test]
    fn null_statistic_auc_near_half() {
        let mut rng = stream_from_seed(3);
        let n = 500;
        let h0: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let h1: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let auc = RocCurve::from_scores(&h0, &h1).unwrap().auc;
        assert!((auc - 0.5).abs() <= 3.0 * (1.0 / (12.0 * n as f64)).sqrt(), "{auc}");
    }

    #[test]
    fn roc_points_are_monotone() {
        let mut rng = stream_from_seed(4);
        let h0: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let h1: Vec<f64> = (0..200).map(|_| rng.gen::<f64>() + 0.3).collect();
        let roc = RocCurve::from_scores(&h0, &h1).unwrap();
        for w in roc.points.windows(2) {
            assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        }
        assert!(roc.auc > 0.5 && roc.auc <= 1.0);
    }

    #[test]
    fn threshold_meets_target() {
        let h0: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let t = threshold_at_pfa(&h0, 0.1).unwrap();
        assert_eq!(t, 89.0);
        assert_eq!(h0.iter().filter(|&&v| v > t).count(), 10);
        assert!(threshold_at_pfa(&[], 0.1).is_err());
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(45, 50);
        assert!(lo < 0.9 && 0.9 < hi && hi <= 1.0);
        assert_eq!(wilson_interval(0, 10).0, 0.0);
        assert!((binomial_margin(0.1, 500) - 0.0263).abs() < 1e-4);
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), 1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), 0.0);
    }

    #[test]
    fn hypothesis_streams_are_disjoint() {
        let s = TrialSeeds::new(1, "roc", 0);
        let h0: Vec<u64> = (0..100).map(|i| s.seed(Hypothesis::H0, i)).collect();
        assert!((0..100).all(|i| !h0.contains(&s.seed(Hypothesis::H1, i))));
    }

    #[test]
    fn sweep_axis_application() {
        let c = ExperimentConfig::default();
        assert_eq!(SweepAxis::NumFrames.apply(&c, 10.0).num_frames, 10);
        assert_eq!(SweepAxis::Speed.apply(&c, 0.0).speed, 0.0);
        assert_eq!(SweepAxis::NumSamples.grid(&c), vec![25.0, 50.0, 100.0, 150.0, 250.0]);
        assert!(c.validate().is_ok());
    }
}
