//! Labelled frame sequences: one moving user (H0) or a legitimate user and
//! an attacker whose frames are interleaved at random (H1).

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FingerprintDataset, Split};
use crate::rng::{SeedTree, Stream};
use crate::synth::{synth_estimate, RssVector, SynthConfig};

pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    /// No attacker.
    H0,
    /// Attacker present.
    H1,
}

impl Hypothesis {
    pub fn label(self) -> f64 {
        match self {
            Hypothesis::H0 => 0.0,
            Hypothesis::H1 => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub num_frames: usize,
    /// Frames per second.
    pub frame_rate: f64,
    /// Speed of every user, m/s.
    pub speed: f64,
    pub hypothesis: Hypothesis,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames < 2 {
            return Err(Error::Config("a frame sequence needs at least 2 frames".into()));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::Config("frame_rate must be positive".into()));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(Error::Config("speed must be non-negative".into()));
        }
        Ok(())
    }

    /// Distance covered between the first and the last frame.
    pub fn segment_length(&self) -> f64 {
        self.speed * (self.num_frames - 1) as f64 / self.frame_rate
    }
}

/// Axis-aligned rectangle in the floor plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Region {
    /// Bounding box of a split's measurement locations.
    pub fn bounding(ds: &FingerprintDataset, split: Split) -> Result<Self> {
        let mut it = ds.split_locations(split).peekable();
        if it.peek().is_none() {
            return Err(Error::InsufficientData(format!("{} split is empty", split.as_str())));
        }
        let mut r = Region {
            min: [f64::INFINITY; 2],
            max: [f64::NEG_INFINITY; 2],
        };
        for loc in it {
            for k in 0..2 {
                r.min[k] = r.min[k].min(loc.xy[k]);
                r.max[k] = r.max[k].max(loc.xy[k]);
            }
        }
        Ok(r)
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

/// Straight-line trajectory `x0 + u * v * t` sampled at `t = k / Rf`, with
/// the start point uniform in the region and the heading uniform in
/// `[0, 2pi)`; redrawn until the whole segment fits.
pub fn gen_trajectory<R: Rng + ?Sized>(region: &Region, cfg: &ScenarioConfig, rng: &mut R) -> Result<Vec<[f64; 2]>> {
    cfg.validate()?;
    if !(0..2).all(|k| region.min[k].is_finite() && region.max[k].is_finite() && region.min[k] <= region.max[k]) {
        return Err(Error::InvalidInput("region is empty".into()));
    }
    let length = cfg.segment_length();
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let x0 = [
            rng.gen_range(region.min[0]..=region.max[0]),
            rng.gen_range(region.min[1]..=region.max[1]),
        ];
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let dir = [angle.cos(), angle.sin()];
        let end = [x0[0] + dir[0] * length, x0[1] + dir[1] * length];
        if cfg.speed == 0.0 || region.contains(end) {
            return Ok((0..cfg.num_frames)
                .map(|k| {
                    let t = k as f64 / cfg.frame_rate;
                    [x0[0] + dir[0] * cfg.speed * t, x0[1] + dir[1] * cfg.speed * t]
                })
                .collect());
        }
    }
    Err(Error::Infeasible(format!(
        "no {length:.2} m segment fits in the region after {MAX_PLACEMENT_ATTEMPTS} attempts"
    )))
}

/// Index (into `ds.locations`) of the split location nearest to `p`; ties go
/// to the lower id.
pub fn nearest_location(ds: &FingerprintDataset, split: Split, p: [f64; 2]) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &i in ds.split.get(split) {
        let xy = ds.locations[i].xy;
        let d2 = (xy[0] - p[0]).powi(2) + (xy[1] - p[1]).powi(2);
        let better = match best {
            None => true,
            Some((bd, bi)) => d2 < bd || (d2 == bd && ds.locations[i].id < ds.locations[bi].id),
        };
        if better {
            best = Some((d2, i));
        }
    }
    best.map(|b| b.1)
}

/// Snaps each point to its nearest measurement location and draws a fresh
/// estimate of that location's RSS. Returns the vectors and snapped ids.
pub fn snap_to_dataset<R: Rng + ?Sized>(
    points: &[[f64; 2]],
    ds: &FingerprintDataset,
    split: Split,
    synth: &SynthConfig,
    rng: &mut R,
) -> Result<(Vec<RssVector>, Vec<u64>)> {
    synth.validate()?;
    if ds.split.get(split).is_empty() {
        return Err(Error::InsufficientData(format!("{} split is empty", split.as_str())));
    }
    let mut vectors = Vec::with_capacity(points.len());
    let mut ids = Vec::with_capacity(points.len());
    for &p in points {
        let li = nearest_location(ds, split, p).expect("split checked nonempty");
        let loc = &ds.locations[li];
        let truth = RssVector::new(loc.true_rss.iter().map(|x| x + synth.noise_floor).collect())?;
        vectors.push(synth_estimate(&truth, synth.samples_per_frame, rng)?);
        ids.push(loc.id);
    }
    Ok((vectors, ids))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub features: Vec<RssVector>,
    pub label: Hypothesis,
    /// 1 for the legitimate user, 2 for the attacker.
    pub user_of_frame: Vec<u8>,
    pub true_locations: Vec<[f64; 2]>,
    pub snap_ids: Vec<u64>,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Debug dump `frame_idx,user,true_x,true_y,snap_id,rss_1..rss_M` (dBm).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let m = self.features.first().map_or(0, |f| f.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["frame_idx", "user", "true_x", "true_y", "snap_id"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=m).map(|i| format!("rss_{i}")));
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut rec = vec![
                k.to_string(),
                self.user_of_frame[k].to_string(),
                self.true_locations[k][0].to_string(),
                self.true_locations[k][1].to_string(),
                self.snap_ids[k].to_string(),
            ];
            rec.extend(self.features[k].to_dbm().iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<scenario csv>", e))?;
        Ok(())
    }
}

struct UserTrack {
    points: Vec<[f64; 2]>,
    vectors: Vec<RssVector>,
    ids: Vec<u64>,
}

fn user_track(ds: &FingerprintDataset, split: Split, region: &Region, cfg: &ScenarioConfig, synth: &SynthConfig, seeds: &SeedTree, user: u64) -> Result<UserTrack> {
    let mut traj_rng: Stream = seeds.stream("trajectory/path", user);
    let points = gen_trajectory(region, cfg, &mut traj_rng)?;
    let mut snap_rng = seeds.stream("trajectory/snap", user);
    let (vectors, ids) = snap_to_dataset(&points, ds, split, synth, &mut snap_rng)?;
    Ok(UserTrack { points, vectors, ids })
}

/// Generates one labelled sequence over the locations of `split`.
pub fn gen_sequence(ds: &FingerprintDataset, split: Split, cfg: &ScenarioConfig, synth: &SynthConfig) -> Result<FrameSequence> {
    cfg.validate()?;
    let region = Region::bounding(ds, split)?;
    let seeds = SeedTree::new(cfg.seed);
    let first = user_track(ds, split, &region, cfg, synth, &seeds, 1)?;
    match cfg.hypothesis {
        Hypothesis::H0 => Ok(FrameSequence {
            features: first.vectors,
            label: Hypothesis::H0,
            user_of_frame: vec![1; cfg.num_frames],
            true_locations: first.points,
            snap_ids: first.ids,
        }),
        Hypothesis::H1 => {
            let second = user_track(ds, split, &region, cfg, synth, &seeds, 2)?;
            let mut coin = seeds.stream("trajectory/merge", 0);
            let mut seq = FrameSequence {
                features: Vec::with_capacity(cfg.num_frames),
                label: Hypothesis::H1,
                user_of_frame: Vec::with_capacity(cfg.num_frames),
                true_locations: Vec::with_capacity(cfg.num_frames),
                snap_ids: Vec::with_capacity(cfg.num_frames),
            };
            for k in 0..cfg.num_frames {
                let (user, t) = if coin.gen_bool(0.5) { (1, &first) } else { (2, &second) };
                seq.features.push(t.vectors[k].clone());
                seq.user_of_frame.push(user);
                seq.true_locations.push(t.points[k]);
                seq.snap_ids.push(t.ids[k]);
            }
            Ok(seq)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{split_locations, MeasurementLocation};
    use crate::rng::stream_from_seed;

    fn grid(n: usize, spacing: f64) -> FingerprintDataset {
        let mut locs = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let id = (i * n + j) as u64;
                locs.push(MeasurementLocation {
                    id,
                    xy: [i as f64 * spacing, j as f64 * spacing],
                    true_rss: vec![1e-9 * (1.0 + id as f64), 2e-9],
                });
            }
        }
        FingerprintDataset::new(locs, vec![1, 2]).unwrap()
    }

    fn cfg(h: Hypothesis, speed: f64) -> ScenarioConfig {
        ScenarioConfig {
            num_frames: 30,
            frame_rate: 10.0,
            speed,
            hypothesis: h,
            seed: 5,
        }
    }

    #[test]
    fn static_user_stays_put() {
        let region = Region { min: [0.0, 0.0], max: [10.0, 10.0] };
        let pts = gen_trajectory(&region, &cfg(Hypothesis::H0, 0.0), &mut stream_from_seed(1)).unwrap();
        assert!(pts.iter().all(|p| *p == pts[0]));
    }

    #[test]
    fn segment_length_and_containment() {
        let c = cfg(Hypothesis::H0, 1.0);
        assert!((c.segment_length() - 2.9).abs() < 1e-12);
        let region = Region { min: [0.0, 0.0], max: [10.0, 10.0] };
        let pts = gen_trajectory(&region, &c, &mut stream_from_seed(2)).unwrap();
        let first = pts[0];
        let last = pts[29];
        let len = ((last[0] - first[0]).powi(2) + (last[1] - first[1]).powi(2)).sqrt();
        assert!((len - 2.9).abs() < 1e-9);
        assert!(pts.iter().all(|p| region.contains(*p)));
    }

    #[test]
    fn trajectory_deterministic_and_infeasible() {
        let region = Region { min: [0.0, 0.0], max: [10.0, 10.0] };
        let c = cfg(Hypothesis::H0, 1.0);
        let a = gen_trajectory(&region, &c, &mut stream_from_seed(3)).unwrap();
        let b = gen_trajectory(&region, &c, &mut stream_from_seed(3)).unwrap();
        assert_eq!(a, b);
        let tiny = Region { min: [0.0, 0.0], max: [1.0, 1.0] };
        assert!(matches!(gen_trajectory(&tiny, &c, &mut stream_from_seed(3)), Err(Error::Infeasible(_))));
    }

    #[test]
    fn snapping_rules() {
        let ds = grid(3, 2.0);
        let synth = SynthConfig::default();
        let (_, ids) = snap_to_dataset(&[[2.0, 4.0]], &ds, Split::Train, &synth, &mut stream_from_seed(0)).unwrap();
        assert_eq!(ids, vec![5]);
        // halfway between id 0 (0,0) and id 1 (0,2)
        let (_, ids) = snap_to_dataset(&[[0.0, 1.0]], &ds, Split::Train, &synth, &mut stream_from_seed(0)).unwrap();
        assert_eq!(ids, vec![0]);
        let empty = split_locations(ds, 0.0, 0.1, 0).unwrap();
        assert!(snap_to_dataset(&[[0.0, 0.0]], &empty, Split::Test, &synth, &mut stream_from_seed(0)).is_err());
    }

    #[test]
    fn constant_trajectory_reuses_one_location() {
        let ds = grid(5, 3.0);
        let seq = gen_sequence(&ds, Split::Train, &cfg(Hypothesis::H0, 0.0), &SynthConfig::default()).unwrap();
        assert!(seq.snap_ids.iter().all(|&i| i == seq.snap_ids[0]));
        // independent estimates, not copies
        assert_ne!(seq.features[0], seq.features[1]);
        assert!(seq.user_of_frame.iter().all(|&u| u == 1));
        assert_eq!(seq.label, Hypothesis::H0);
    }

    #[test]
    fn h1_merges_two_users() {
        let ds = grid(8, 3.0);
        let mut counts = 0usize;
        let trials = 200;
        for s in 0..trials {
            let c = ScenarioConfig { seed: s, ..cfg(Hypothesis::H1, 1.0) };
            let seq = gen_sequence(&ds, Split::Train, &c, &SynthConfig::default()).unwrap();
            assert_eq!(seq.len(), 30);
            assert_eq!(seq.label, Hypothesis::H1);
            counts += seq.user_of_frame.iter().filter(|&&u| u == 1).count();
        }
        // mean 15 per sequence, sd of the average over 200 is ~0.19
        let mean = counts as f64 / trials as f64;
        assert!((mean - 15.0).abs() < 1.0, "mean {mean}");
    }

    #[test]
    fn sequence_is_deterministic() {
        let ds = grid(6, 3.0);
        let c = cfg(Hypothesis::H1, 2.0);
        let a = gen_sequence(&ds, Split::Train, &c, &SynthConfig::default()).unwrap();
        let b = gen_sequence(&ds, Split::Train, &c, &SynthConfig::default()).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("frame_idx,user,true_x,true_y,snap_id,rss_1,rss_2\n"));
        assert_eq!(text.lines().count(), 31);
    }
}
