//! Position-change detector.
//!
//! A pair of RSS vectors is mapped to a symmetric statistic
//! `(g(a, b) + g(b, a)) / 2`, where `g` is a dense network applied to the
//! fixed log-domain features `[dB(a), dB(b), slog(a - b)]`. Large values mean
//! the two frames came from different places.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FingerprintDataset, Split};
use crate::neural::{self, bce_with_logit, bce_with_logit_grad, Activation, DenseNetwork, LossHistory, Matrix, Objective, Parameterized, TrainConfig};
use crate::rng::{stream_from_seed, SeedTree, PCD_INIT};
use crate::synth::{chi2_for_samples, synth_into, RssVector, SynthConfig};

pub const DEFAULT_EPSILON_LOG: f64 = 1e-12;
pub const DEFAULT_PAIRS_PER_CLASS: usize = 50_000;
pub const DEFAULT_TARGET_SAME_FA: f64 = 0.05;
pub const PCD_KIND: &str = "pcd";

fn db(p: f64, eps: f64) -> f64 {
    10.0 * (p + eps).log10()
}

/// Odd log compression of a power difference: `sign(d) * 10 log10(1 + |d|/eps)`.
pub fn signed_log(d: f64, eps: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        d.signum() * 10.0 * (d.abs() / eps).ln_1p() / std::f64::consts::LN_10
    }
}

fn check_positive(v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !(x.is_finite() && *x > 0.0)) {
        Some(i) => Err(Error::InvalidInput(format!("RSS entry {i} is {}; must be positive", v[i]))),
        None => Ok(()),
    }
}

fn push_features(a: &[f64], b: &[f64], eps: f64, out: &mut Vec<f64>) {
    out.extend(a.iter().map(|&x| db(x, eps)));
    out.extend(b.iter().map(|&x| db(x, eps)));
    out.extend(a.iter().zip(b).map(|(&x, &y)| signed_log(x - y, eps)));
}

/// Fixed first layer: `[10log10(a+eps), 10log10(b+eps), slog(a-b)]`, length `3M`.
pub fn featurize_pair(a: &RssVector, b: &RssVector, epsilon_log: f64) -> Result<Vec<f64>> {
    featurize_raw(a.values(), b.values(), epsilon_log)
}

fn featurize_raw(a: &[f64], b: &[f64], eps: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput("epsilon_log must be positive".into()));
    }
    check_positive(a)?;
    check_positive(b)?;
    let mut out = Vec::with_capacity(3 * a.len());
    push_features(a, b, eps, &mut out);
    Ok(out)
}

/// Per-feature standardization applied before the network; not trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureNorm {
    pub fn identity(dim: usize) -> Self {
        FeatureNorm {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    fn fit(rows: &Matrix) -> Self {
        let n = rows.rows.max(1) as f64;
        let mut mean = vec![0.0; rows.cols];
        for r in 0..rows.rows {
            for (m, v) in mean.iter_mut().zip(rows.row(r)) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; rows.cols];
        for r in 0..rows.rows {
            for ((s, v), m) in var.iter_mut().zip(rows.row(r)).zip(&mean) {
                *s += (v - m).powi(2) / n;
            }
        }
        let scale = var.iter().map(|v| if *v > 1e-12 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        FeatureNorm { shift: mean, scale }
    }

    fn apply(&self, row: &mut [f64]) {
        for ((v, s), k) in row.iter_mut().zip(&self.shift).zip(&self.scale) {
            *v = (*v - s) * k;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PcdArchitecture {
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
}

impl Default for PcdArchitecture {
    /// Three hidden layers of 512 leaky-ReLU units.
    fn default() -> Self {
        PcdArchitecture {
            hidden: vec![512, 512, 512],
            leaky_slope: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcdModel {
    pub num_aps: usize,
    pub epsilon_log: f64,
    /// Decision threshold; `None` until calibrated.
    pub threshold: Option<f64>,
    pub feature_norm: FeatureNorm,
    /// The asymmetric network `g`, input width `3 * num_aps`, one linear output.
    pub aux_net: DenseNetwork,
}

impl PcdModel {
    pub fn new(num_aps: usize, epsilon_log: f64, feature_norm: FeatureNorm, aux_net: DenseNetwork) -> Result<Self> {
        let model = PcdModel {
            num_aps,
            epsilon_log,
            threshold: None,
            feature_norm,
            aux_net,
        };
        model.check()?;
        Ok(model)
    }

    pub fn init<R: Rng + ?Sized>(num_aps: usize, arch: &PcdArchitecture, rng: &mut R) -> Result<Self> {
        let mut widths = vec![3 * num_aps];
        widths.extend(&arch.hidden);
        widths.push(1);
        let net = DenseNetwork::init(&widths, Activation::LeakyRelu { slope: arch.leaky_slope }, Activation::Identity, rng)?;
        PcdModel::new(num_aps, DEFAULT_EPSILON_LOG, FeatureNorm::identity(3 * num_aps), net)
    }

    fn check(&self) -> Result<()> {
        let d = 3 * self.num_aps;
        if self.num_aps == 0 || self.aux_net.input_dim() != d {
            return Err(Error::ModelFormat(format!(
                "position-change network expects {} inputs, need 3*{}",
                self.aux_net.input_dim(),
                self.num_aps
            )));
        }
        if self.aux_net.output_dim() != 1 {
            return Err(Error::ModelFormat("position-change network must have one output".into()));
        }
        if self.feature_norm.shift.len() != d || self.feature_norm.scale.len() != d {
            return Err(Error::ModelFormat("feature normalization width mismatch".into()));
        }
        if !(self.epsilon_log > 0.0 && self.epsilon_log.is_finite()) {
            return Err(Error::ModelFormat("epsilon_log must be positive".into()));
        }
        if let Some(t) = self.threshold {
            if !t.is_finite() {
                return Err(Error::ModelFormat("threshold must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn threshold(&self) -> Result<f64> {
        self.threshold
            .ok_or_else(|| Error::MissingPrerequisite("position-change detector threshold is not calibrated".into()))
    }

    pub fn set_threshold(&mut self, threshold: f64) -> Result<()> {
        if !threshold.is_finite() {
            return Err(Error::Numerical(format!("position-change threshold {threshold} is not finite")));
        }
        self.threshold = Some(threshold);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        neural::io::to_json(PCD_KIND, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: PcdModel = neural::io::from_json(PCD_KIND, text)?;
        m.check()?;
        Ok(m)
    }

    /// Both orderings of every pair as normalized feature rows: rows
    /// `0..n` hold `(a, b)`, rows `n..2n` hold `(b, a)`.
    fn symmetric_rows(&self, pairs: &[(&[f64], &[f64])]) -> Result<Matrix> {
        let n = pairs.len();
        let d = 3 * self.num_aps;
        let mut data = Vec::with_capacity(2 * n * d);
        for flip in [false, true] {
            for &(a, b) in pairs {
                if a.len() != self.num_aps || b.len() != self.num_aps {
                    return Err(Error::DimensionMismatch {
                        expected: self.num_aps,
                        actual: if a.len() != self.num_aps { a.len() } else { b.len() },
                    });
                }
                check_positive(a)?;
                check_positive(b)?;
                let start = data.len();
                if flip {
                    push_features(b, a, self.epsilon_log, &mut data);
                } else {
                    push_features(a, b, self.epsilon_log, &mut data);
                }
                self.feature_norm.apply(&mut data[start..]);
            }
        }
        Ok(Matrix::from_vec(2 * n, d, data))
    }

    /// Statistics for many pairs at once.
    pub fn statistics(&self, pairs: &[(&[f64], &[f64])]) -> Result<Vec<f64>> {
        let n = pairs.len();
        let mut out = Vec::with_capacity(n);
        for chunk in pairs.chunks(512) {
            let rows = self.symmetric_rows(chunk)?;
            let trace = self.aux_net.forward_batch(rows)?;
            let o = &trace.output().data;
            let m = chunk.len();
            out.extend((0..m).map(|i| 0.5 * (o[i] + o[m + i])));
        }
        Ok(out)
    }
}

impl Parameterized for PcdModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.aux_net.param_slices()
    }
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.aux_net.param_slices_mut()
    }
}

/// Symmetric position-change statistic of one pair.
pub fn pcd_statistic(model: &PcdModel, a: &RssVector, b: &RssVector) -> Result<f64> {
    Ok(model.statistics(&[(a.values(), b.values())])?[0])
}

/// Gradient of the symmetric statistic of one pair with respect to the
/// network parameters, laid out as [`Parameterized::param_slices`].
pub fn pcd_gradient(model: &PcdModel, a: &RssVector, b: &RssVector) -> Result<Vec<Vec<f64>>> {
    let rows = model.symmetric_rows(&[(a.values(), b.values())])?;
    let trace = model.aux_net.forward_batch(rows)?;
    let mut grads = model.zero_grads();
    model.aux_net.backward_batch(&trace, &Matrix::from_vec(2, 1, vec![0.5, 0.5]), &mut grads)?;
    Ok(grads)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Balanced same-location (label 0) and different-location (label 1) pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairDataset {
    pub same: Vec<Pair>,
    pub diff: Vec<Pair>,
}

impl PairDataset {
    pub fn len(&self) -> usize {
        self.same.len() + self.diff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Pair `i` over the concatenation `same ++ diff`, with its label.
    pub fn get(&self, i: usize) -> (&Pair, f64) {
        if i < self.same.len() {
            (&self.same[i], 0.0)
        } else {
            (&self.diff[i - self.same.len()], 1.0)
        }
    }
}

/// `E` synthesized estimates for each location of a split, stored flat.
#[derive(Debug, Clone)]
pub struct EstimateBank {
    pub num_aps: usize,
    pub per_location: usize,
    /// Dataset indices of the locations, in bank order.
    pub locations: Vec<usize>,
    data: Vec<f64>,
}

impl EstimateBank {
    pub fn generate<R: Rng + ?Sized>(ds: &FingerprintDataset, split: Split, synth: &SynthConfig, rng: &mut R) -> Result<Self> {
        synth.validate()?;
        let locations = ds.split.get(split).to_vec();
        let m = ds.num_aps();
        let (dist, scale) = chi2_for_samples(synth.samples_per_frame)?;
        let mut data = Vec::with_capacity(locations.len() * synth.estimates_per_location * m);
        let mut truth = vec![0.0; m];
        for &li in &locations {
            for (t, p) in truth.iter_mut().zip(&ds.locations[li].true_rss) {
                *t = p + synth.noise_floor;
            }
            for _ in 0..synth.estimates_per_location {
                synth_into(&truth, &dist, scale, rng, &mut data);
            }
        }
        Ok(EstimateBank {
            num_aps: m,
            per_location: synth.estimates_per_location,
            locations,
            data,
        })
    }

    pub fn estimate(&self, location: usize, e: usize) -> &[f64] {
        let start = (location * self.per_location + e) * self.num_aps;
        &self.data[start..start + self.num_aps]
    }
}

/// Builds `pairs` same-location and `pairs` different-location examples
/// from the estimates of one split.
pub fn build_pair_dataset(ds: &FingerprintDataset, synth: &SynthConfig, pairs: usize, split: Split, seed: u64) -> Result<PairDataset> {
    if pairs == 0 {
        return Err(Error::Config("number of pairs per class must be positive".into()));
    }
    let n_loc = ds.split.get(split).len();
    if n_loc < 2 {
        return Err(Error::InsufficientData(format!(
            "{} split has {n_loc} locations; different-location pairs need at least 2",
            split.as_str()
        )));
    }
    if synth.estimates_per_location < 2 {
        return Err(Error::Config("estimates_per_location must be >= 2 to form same-location pairs".into()));
    }
    let mut rng = stream_from_seed(seed);
    let bank = EstimateBank::generate(ds, split, synth, &mut rng)?;
    let e = synth.estimates_per_location;
    let mut out = PairDataset::default();
    for _ in 0..pairs {
        let d = rng.gen_range(0..n_loc);
        let ee = index::sample(&mut rng, e, 2);
        out.same.push(Pair {
            a: bank.estimate(d, ee.index(0)).to_vec(),
            b: bank.estimate(d, ee.index(1)).to_vec(),
        });
    }
    for _ in 0..pairs {
        let dd = index::sample(&mut rng, n_loc, 2);
        let ee = index::sample(&mut rng, e, 2);
        out.diff.push(Pair {
            a: bank.estimate(dd.index(0), ee.index(0)).to_vec(),
            b: bank.estimate(dd.index(1), ee.index(1)).to_vec(),
        });
    }
    Ok(out)
}

struct PairObjective {
    train_rows: Matrix,
    train_labels: Vec<f64>,
    val_rows: Matrix,
    val_labels: Vec<f64>,
}

fn gather(rows: &Matrix, n: usize, idx: &[usize]) -> Matrix {
    let d = rows.cols;
    let mut data = Vec::with_capacity(2 * idx.len() * d);
    for half in 0..2 {
        for &i in idx {
            data.extend_from_slice(rows.row(half * n + i));
        }
    }
    Matrix::from_vec(2 * idx.len(), d, data)
}

impl PairObjective {
    fn loss_on(&self, model: &PcdModel, rows: &Matrix, labels: &[f64], idx: &[usize], grads: Option<&mut [Vec<f64>]>) -> Result<f64> {
        let x = gather(rows, labels.len(), idx);
        let trace = model.aux_net.forward_batch(x)?;
        let o = &trace.output().data;
        let m = idx.len();
        let mut up = Matrix::zeros(2 * m, 1);
        let mut loss = 0.0;
        for (r, &i) in idx.iter().enumerate() {
            let s = 0.5 * (o[r] + o[m + r]);
            loss += bce_with_logit(s, labels[i]);
            let g = 0.5 * bce_with_logit_grad(s, labels[i]);
            up.data[r] = g;
            up.data[m + r] = g;
        }
        if let Some(grads) = grads {
            model.aux_net.backward_batch(&trace, &up, grads)?;
        }
        Ok(loss)
    }
}

impl Objective for PairObjective {
    type Model = PcdModel;

    fn train_len(&self) -> usize {
        self.train_labels.len()
    }

    fn accumulate(&self, model: &PcdModel, batch: &[usize], grads: &mut [Vec<f64>]) -> Result<f64> {
        self.loss_on(model, &self.train_rows, &self.train_labels, batch, Some(grads))
    }

    fn validation_loss(&self, model: &PcdModel) -> Result<f64> {
        let idx: Vec<usize> = (0..self.val_labels.len()).collect();
        let mut total = 0.0;
        for chunk in idx.chunks(1024) {
            total += self.loss_on(model, &self.val_rows, &self.val_labels, chunk, None)?;
        }
        Ok(total / idx.len() as f64)
    }
}

fn pair_rows(model: &PcdModel, set: &PairDataset) -> Result<(Matrix, Vec<f64>)> {
    let refs: Vec<(&[f64], &[f64])> = (0..set.len())
        .map(|i| {
            let (p, _) = set.get(i);
            (p.a.as_slice(), p.b.as_slice())
        })
        .collect();
    let labels = (0..set.len()).map(|i| set.get(i).1).collect();
    Ok((model.symmetric_rows(&refs)?, labels))
}

/// Trains the position-change detector with BCE on the symmetric statistic.
/// The returned model has no threshold yet.
pub fn train_pcd(
    pairs: &PairDataset,
    val_pairs: &PairDataset,
    arch: &PcdArchitecture,
    cfg: &TrainConfig,
) -> Result<(PcdModel, LossHistory)> {
    if pairs.same.is_empty() || pairs.diff.is_empty() {
        return Err(Error::Config(
            "training pairs must contain both same-location and different-location examples".into(),
        ));
    }
    if val_pairs.is_empty() {
        return Err(Error::InsufficientData("validation pair set is empty".into()));
    }
    let m = pairs.same[0].a.len();
    let mut init_rng = SeedTree::new(cfg.seed).stream(PCD_INIT, 0);
    let mut model = PcdModel::init(m, arch, &mut init_rng)?;

    let (raw_rows, _) = pair_rows(&model, pairs)?;
    model.feature_norm = FeatureNorm::fit(&raw_rows);
    drop(raw_rows);
    let (train_rows, train_labels) = pair_rows(&model, pairs)?;
    let (val_rows, val_labels) = pair_rows(&model, val_pairs)?;
    let objective = PairObjective {
        train_rows,
        train_labels,
        val_rows,
        val_labels,
    };
    neural::fit(model, &objective, cfg)
}

/// Fraction of pairs classified correctly when "different" means
/// `statistic > threshold`.
pub fn pair_accuracy(model: &PcdModel, pairs: &PairDataset, threshold: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no pairs to score".into()));
    }
    let refs: Vec<(&[f64], &[f64])> = pairs.same.iter().chain(&pairs.diff).map(|p| (p.a.as_slice(), p.b.as_slice())).collect();
    let stats = model.statistics(&refs)?;
    let correct = stats
        .iter()
        .enumerate()
        .filter(|(i, &s)| (s > threshold) == (*i >= pairs.same.len()))
        .count();
    Ok(correct as f64 / stats.len() as f64)
}

/// Linear-interpolated empirical quantile of unsorted data, `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Threshold at the `(1 - target_same_fa)` quantile of the statistic over
/// same-location validation pairs.
pub fn calibrate_pcd_threshold(model: &PcdModel, val_same_pairs: &[Pair], target_same_fa: f64) -> Result<f64> {
    if val_same_pairs.is_empty() {
        return Err(Error::InsufficientData("no same-location pairs to calibrate on".into()));
    }
    if !(target_same_fa > 0.0 && target_same_fa < 1.0) {
        return Err(Error::Config(format!("target_same_fa must lie in (0, 1), got {target_same_fa}")));
    }
    let refs: Vec<(&[f64], &[f64])> = val_same_pairs.iter().map(|p| (p.a.as_slice(), p.b.as_slice())).collect();
    let stats = model.statistics(&refs)?;
    Ok(quantile(&stats, 1.0 - target_same_fa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{split_locations, MeasurementLocation};

    fn rss(v: &[f64]) -> RssVector {
        RssVector::new(v.to_vec()).unwrap()
    }

    fn small_arch() -> PcdArchitecture {
        PcdArchitecture {
            hidden: vec![16, 16],
            leaky_slope: 0.01,
        }
    }

    fn toy_dataset(n: usize) -> FingerprintDataset {
        let locs = (0..n)
            .map(|i| {
                let f = i as f64;
                MeasurementLocation {
                    id: i as u64,
                    xy: [f, 0.0],
                    true_rss: (0..3).map(|k| 1e-9 * 10f64.powf(((f * 7.3 + k as f64 * 3.1).sin() * 2.0) / 1.0)).collect(),
                }
            })
            .collect();
        FingerprintDataset::new(locs, vec![1, 2, 3]).unwrap()
    }

    #[test]
    fn equal_inputs_zero_difference_block() {
        let r = rss(&[1e-9, 3e-7, 0.5]);
        let f = featurize_pair(&r, &r, DEFAULT_EPSILON_LOG).unwrap();
        assert_eq!(&f[6..], &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn unit_power_blocks() {
        let one = rss(&[1.0]);
        let f = featurize_pair(&one, &one, 1e-12).unwrap();
        assert!(f[0].abs() < 1e-9 && f[1].abs() < 1e-9);
        let ten = rss(&[10.0]);
        let f = featurize_pair(&ten, &one, 1e-12).unwrap();
        assert!((f[0] - 10.0).abs() < 1e-9);
        assert!(f[1].abs() < 1e-9);
        // 10 log10(1 + 9e12)
        assert!((f[2] - 129.542_425_094_393_25).abs() < 1e-9, "{}", f[2]);
        let g = featurize_pair(&one, &ten, 1e-12).unwrap();
        assert_eq!(g[2], -f[2]);
    }

    #[test]
    fn non_positive_rejected() {
        assert!(featurize_raw(&[1.0, 0.0], &[1.0, 1.0], 1e-12).is_err());
        assert!(featurize_raw(&[1.0], &[1.0, 1.0], 1e-12).is_err());
    }

    #[test]
    fn zero_weights_give_zero_statistic() {
        let mut m = PcdModel::init(2, &small_arch(), &mut stream_from_seed(0)).unwrap();
        for s in m.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        assert_eq!(pcd_statistic(&m, &rss(&[1e-9, 2e-9]), &rss(&[5e-8, 1e-10])).unwrap(), 0.0);
    }

    #[test]
    fn statistic_is_symmetric() {
        let m = PcdModel::init(3, &small_arch(), &mut stream_from_seed(4)).unwrap();
        let mut rng = stream_from_seed(5);
        for _ in 0..200 {
            let a: Vec<f64> = (0..3).map(|_| 10f64.powf(rng.gen_range(-12.0..-3.0))).collect();
            let b: Vec<f64> = (0..3).map(|_| 10f64.powf(rng.gen_range(-12.0..-3.0))).collect();
            let (a, b) = (rss(&a), rss(&b));
            assert_eq!(
                pcd_statistic(&m, &a, &b).unwrap().to_bits(),
                pcd_statistic(&m, &b, &a).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = PcdModel::init(3, &small_arch(), &mut stream_from_seed(4)).unwrap();
        assert!(matches!(
            pcd_statistic(&m, &rss(&[1.0, 1.0]), &rss(&[1.0, 1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pair_dataset_is_balanced_and_deterministic() {
        let ds = toy_dataset(20);
        let synth = SynthConfig {
            samples_per_frame: 50,
            estimates_per_location: 10,
            noise_floor: 0.0,
        };
        let a = build_pair_dataset(&ds, &synth, 30, Split::Train, 9).unwrap();
        let b = build_pair_dataset(&ds, &synth, 30, Split::Train, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.same.len(), 30);
        assert_eq!(a.diff.len(), 30);
        assert_eq!(a.get(0).1, 0.0);
        assert_eq!(a.get(30).1, 1.0);
        assert!(a.same.iter().chain(&a.diff).all(|p| p.a != p.b));
    }

    #[test]
    fn pair_dataset_errors() {
        let ds = toy_dataset(20);
        let synth = SynthConfig {
            samples_per_frame: 50,
            estimates_per_location: 10,
            noise_floor: 0.0,
        };
        assert!(build_pair_dataset(&ds, &synth, 0, Split::Train, 1).is_err());
        // 20 locations * 0.05 rounds to one test location
        let ds1 = split_locations(ds.clone(), 0.05, 0.0, 1).unwrap();
        assert_eq!(ds1.split.test.len(), 1);
        assert!(matches!(
            build_pair_dataset(&ds1, &synth, 5, Split::Test, 1),
            Err(Error::InsufficientData(_))
        ));
        let one_est = SynthConfig { estimates_per_location: 1, ..synth };
        assert!(build_pair_dataset(&ds, &one_est, 5, Split::Train, 1).is_err());
    }

    #[test]
    fn single_class_training_rejected() {
        let ds = toy_dataset(20);
        let synth = SynthConfig {
            samples_per_frame: 50,
            estimates_per_location: 10,
            noise_floor: 0.0,
        };
        let mut p = build_pair_dataset(&ds, &synth, 20, Split::Train, 1).unwrap();
        p.diff.clear();
        let cfg = TrainConfig { max_epochs: 1, early_stop_patience: 1, ..Default::default() };
        assert!(matches!(train_pcd(&p, &p, &small_arch(), &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn quantile_calibration() {
        let m = PcdModel::init(1, &small_arch(), &mut stream_from_seed(0)).unwrap();
        let mut zero = m.clone();
        for s in zero.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        zero.aux_net.layers_mut().last_mut().unwrap().bias[0] = 2.5;
        let pairs: Vec<Pair> = (1..=9).map(|i| Pair { a: vec![i as f64], b: vec![1.0] }).collect();
        assert_eq!(calibrate_pcd_threshold(&zero, &pairs, 0.3).unwrap(), 2.5);
        let stats: Vec<f64> = pairs.iter().map(|p| pcd_statistic(&m, &rss(&p.a), &rss(&p.b)).unwrap()).collect();
        assert_eq!(calibrate_pcd_threshold(&m, &pairs, 0.5).unwrap(), quantile(&stats, 0.5));
        let mut sorted = stats.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(quantile(&stats, 0.5), sorted[4]);
        assert!(calibrate_pcd_threshold(&m, &[], 0.1).is_err());
        assert!(calibrate_pcd_threshold(&m, &pairs, 1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut m = PcdModel::init(2, &small_arch(), &mut stream_from_seed(3)).unwrap();
        m.threshold = Some(-0.25);
        let back = PcdModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let mut bad = m.clone();
        bad.num_aps = 3;
        assert!(PcdModel::from_json(&bad.to_json().unwrap()).is_err());
    }

    #[test]
    fn toy_training_separates_pairs() {
        let ds = split_locations(toy_dataset(40), 0.0, 0.25, 2).unwrap();
        let synth = SynthConfig {
            samples_per_frame: 150,
            estimates_per_location: 50,
            noise_floor: 0.0,
        };
        let tr = build_pair_dataset(&ds, &synth, 1000, Split::Train, 1).unwrap();
        let va = build_pair_dataset(&ds, &synth, 300, Split::Val, 2).unwrap();
        let cfg = TrainConfig {
            learning_rate: 3e-3,
            batch_size: 64,
            max_epochs: 30,
            early_stop_patience: 5,
            seed: 7,
        };
        let (m, hist) = train_pcd(&tr, &va, &small_arch(), &cfg).unwrap();
        let acc = pair_accuracy(&m, &va, 0.0).unwrap();
        assert!(acc > 0.9, "acc {acc}, history {:?}", hist.epochs.last());
    }
}
