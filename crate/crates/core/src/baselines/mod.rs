//! Cluster-count spoofing detectors: the number of clusters among a
//! sequence's RSS vectors (in dB) is compared with an integer threshold.

mod birch;
mod dbscan;
mod optics;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{FrameSequence, Hypothesis};

pub use birch::birch_count;
pub use dbscan::dbscan;
pub use optics::optics_xi;

/// Cluster id per point; `None` marks noise.
pub type Labels = Vec<Option<usize>>;

/// Minimum number of H0 trials for threshold calibration.
pub const MIN_CALIBRATION_TRIALS: usize = 200;

pub(crate) fn distance_matrix(points: &[Vec<f64>]) -> Vec<f64> {
    let n = points.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Distinct clusters plus one per noise point.
pub fn count_with_singletons(labels: &[Option<usize>]) -> usize {
    let mut ids: Vec<usize> = labels.iter().flatten().copied().collect();
    ids.sort_unstable();
    ids.dedup();
    ids.len() + labels.iter().filter(|l| l.is_none()).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum ClusterAlgorithm {
    Dbscan { eps: f64, min_pts: usize },
    Optics { min_pts: usize, xi: f64 },
    Birch { branching: usize, radius: f64 },
}

impl ClusterAlgorithm {
    pub fn default_dbscan() -> Self {
        ClusterAlgorithm::Dbscan { eps: 6.0, min_pts: 2 }
    }

    pub fn default_optics() -> Self {
        ClusterAlgorithm::Optics { min_pts: 2, xi: 0.05 }
    }

    pub fn default_birch() -> Self {
        ClusterAlgorithm::Birch {
            branching: 50,
            radius: 6.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ClusterAlgorithm::Dbscan { .. } => "dbscan",
            ClusterAlgorithm::Optics { .. } => "optics",
            ClusterAlgorithm::Birch { .. } => "birch",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ClusterAlgorithm::Dbscan { eps, min_pts } => eps > 0.0 && eps.is_finite() && min_pts >= 1,
            ClusterAlgorithm::Optics { min_pts, xi } => min_pts >= 2 && xi > 0.0 && xi < 1.0,
            ClusterAlgorithm::Birch { branching, radius } => branching >= 2 && radius > 0.0 && radius.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid {} parameters: {self:?}", self.name())))
        }
    }

    /// Cluster count of points already in dB.
    pub fn count_points(&self, points: &[Vec<f64>]) -> Result<usize> {
        self.validate()?;
        if points.is_empty() {
            return Err(Error::InvalidInput("cannot cluster an empty sequence".into()));
        }
        Ok(match *self {
            ClusterAlgorithm::Dbscan { eps, min_pts } => count_with_singletons(&dbscan(points, eps, min_pts)),
            ClusterAlgorithm::Optics { min_pts, xi } => count_with_singletons(&optics_xi(points, min_pts, xi)),
            ClusterAlgorithm::Birch { branching, radius } => birch_count(points, branching, radius),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterDetector {
    pub algorithm: ClusterAlgorithm,
    /// Decide H1 iff the cluster count exceeds this; set by calibration.
    pub threshold: Option<usize>,
}

impl ClusterDetector {
    pub fn new(algorithm: ClusterAlgorithm) -> Result<Self> {
        algorithm.validate()?;
        Ok(ClusterDetector { algorithm, threshold: None })
    }

    pub fn name(&self) -> &'static str {
        self.algorithm.name()
    }

    pub fn decide(&self, frames: &FrameSequence) -> Result<Hypothesis> {
        let tau = self
            .threshold
            .ok_or_else(|| Error::MissingPrerequisite(format!("{} threshold not calibrated", self.name())))?;
        Ok(if cluster_count(self, frames)? > tau {
            Hypothesis::H1
        } else {
            Hypothesis::H0
        })
    }
}

/// Number of clusters among the frames' RSS vectors in dB, noise points
/// counted as singleton clusters.
pub fn cluster_count(detector: &ClusterDetector, frames: &FrameSequence) -> Result<usize> {
    let points: Vec<Vec<f64>> = frames.features.iter().map(|f| f.to_dbm()).collect();
    detector.algorithm.count_points(&points)
}

/// Smallest `tau >= 1` with empirical `P(count > tau) <= target_pfa`.
pub fn calibrate_count_threshold(h0_counts: &[usize], target_pfa: f64) -> Result<usize> {
    if h0_counts.len() < MIN_CALIBRATION_TRIALS {
        return Err(Error::InsufficientData(format!(
            "threshold calibration needs at least {MIN_CALIBRATION_TRIALS} H0 trials, got {}",
            h0_counts.len()
        )));
    }
    if !(target_pfa > 0.0 && target_pfa < 1.0) {
        return Err(Error::Config(format!("target Pfa must lie in (0, 1), got {target_pfa}")));
    }
    let mut sorted = h0_counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let mut tau = 1;
    loop {
        let above = n - sorted.partition_point(|&c| c <= tau);
        if above as f64 <= target_pfa * n as f64 {
            return Ok(tau);
        }
        tau += 1;
    }
}

/// Calibrates `detector` in place on H0 trials and returns the threshold.
pub fn calibrate_threshold(detector: &mut ClusterDetector, h0_trials: &[FrameSequence], target_pfa: f64) -> Result<usize> {
    let counts = h0_trials
        .iter()
        .map(|f| cluster_count(detector, f))
        .collect::<Result<Vec<_>>>()?;
    let tau = calibrate_count_threshold(&counts, target_pfa)?;
    detector.threshold = Some(tau);
    Ok(tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x, -x]).collect()
    }

    #[test]
    fn identical_vectors_one_cluster() {
        let p = vec![vec![-60.0, -70.0, -80.0]; 10];
        let a = ClusterAlgorithm::Dbscan { eps: 3.0, min_pts: 3 };
        assert_eq!(a.count_points(&p).unwrap(), 1);
        assert_eq!(ClusterAlgorithm::default_optics().count_points(&p).unwrap(), 1);
        assert_eq!(ClusterAlgorithm::default_birch().count_points(&p).unwrap(), 1);
    }

    #[test]
    fn single_frame_one_cluster() {
        let p = vec![vec![-50.0, -60.0]];
        for a in [ClusterAlgorithm::default_dbscan(), ClusterAlgorithm::default_optics(), ClusterAlgorithm::default_birch()] {
            assert_eq!(a.count_points(&p).unwrap(), 1, "{}", a.name());
        }
    }

    #[test]
    fn two_groups_forty_db_apart() {
        let mut v: Vec<f64> = (0..8).map(|i| -60.0 + 0.3 * i as f64).collect();
        v.extend((0..8).map(|i| -20.0 + 0.3 * i as f64));
        let p = pts(&v);
        for a in [ClusterAlgorithm::default_dbscan(), ClusterAlgorithm::default_optics(), ClusterAlgorithm::default_birch()] {
            assert_eq!(a.count_points(&p).unwrap(), 2, "{}", a.name());
        }
    }

    #[test]
    fn far_outlier_adds_one_dbscan_cluster() {
        let v: Vec<f64> = (0..10).map(|i| -60.0 + 0.5 * i as f64).collect();
        let mut p = pts(&v);
        let a = ClusterAlgorithm::default_dbscan();
        let before = a.count_points(&p).unwrap();
        p.push(vec![100.0, 100.0]);
        assert_eq!(a.count_points(&p).unwrap(), before + 1);
    }

    #[test]
    fn invalid_parameters() {
        assert!(ClusterAlgorithm::Dbscan { eps: 0.0, min_pts: 2 }.validate().is_err());
        assert!(ClusterAlgorithm::Optics { min_pts: 2, xi: 1.0 }.validate().is_err());
        assert!(ClusterAlgorithm::Birch { branching: 1, radius: 1.0 }.validate().is_err());
        assert!(ClusterAlgorithm::default_dbscan().count_points(&[]).is_err());
    }

    #[test]
    fn calibration_quantiles() {
        assert_eq!(calibrate_count_threshold(&vec![1; 300], 0.1).unwrap(), 1);
        let mut c = vec![1; 170];
        c.extend(vec![2; 20]);
        c.extend(vec![3; 10]);
        assert_eq!(calibrate_count_threshold(&c, 0.1).unwrap(), 2);
        assert_eq!(calibrate_count_threshold(&c, 0.5).unwrap(), 1);
        assert!(matches!(calibrate_count_threshold(&c[..199], 0.1), Err(Error::InsufficientData(_))));
        assert!(calibrate_count_threshold(&c, 0.0).is_err());
    }

    #[test]
    fn uncalibrated_detector_refuses_to_decide() {
        let d = ClusterDetector::new(ClusterAlgorithm::default_dbscan()).unwrap();
        let frames = FrameSequence {
            features: vec![crate::synth::RssVector::new(vec![1e-6]).unwrap()],
            label: Hypothesis::H0,
            user_of_frame: vec![1],
            true_locations: vec![[0.0, 0.0]],
            snap_ids: vec![0],
        };
        assert!(matches!(d.decide(&frames), Err(Error::MissingPrerequisite(_))));
    }
}
