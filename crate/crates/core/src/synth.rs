//! Statistic-level synthesis of finite-sample RSS estimates.
//!
//! With circularly-symmetric Gaussian received samples of power `p`, the
//! sample-mean power estimate over `n` samples is `p * c / (2n)` with
//! `c ~ chi2(2n)`. Drawing that scaled chi-square replaces simulating the
//! samples themselves.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-frame RSS at each receiver, linear watts, all entries positive and finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RssVector(Vec<f64>);

impl RssVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("RSS vector must not be empty".into()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidInput(format!("RSS entry {i} is {v}; must be positive and finite")));
        }
        Ok(RssVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_dbm(&self) -> Vec<f64> {
        self.0.iter().map(|&w| crate::ingest::watts_to_dbm(w)).collect()
    }
}

impl TryFrom<Vec<f64>> for RssVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        RssVector::new(v)
    }
}

impl From<RssVector> for Vec<f64> {
    fn from(v: RssVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Samples averaged per frame.
    pub samples_per_frame: usize,
    /// Estimates synthesized per measurement location.
    pub estimates_per_location: usize,
    /// Added to the surveyed power before synthesis, watts.
    pub noise_floor: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            samples_per_frame: 150,
            estimates_per_location: 1000,
            noise_floor: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_frame == 0 || self.estimates_per_location == 0 {
            return Err(Error::Config("samples_per_frame and estimates_per_location must be >= 1".into()));
        }
        if !(self.noise_floor >= 0.0 && self.noise_floor.is_finite()) {
            return Err(Error::Config("noise_floor must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// One chi-square draw with `dof` degrees of freedom.
pub fn chi2_sample<R: Rng + ?Sized>(dof: usize, rng: &mut R) -> Result<f64> {
    Ok(chi2(dof)?.sample(rng))
}

fn chi2(dof: usize) -> Result<ChiSquared<f64>> {
    if dof == 0 {
        return Err(Error::InvalidInput("chi-square needs at least one degree of freedom".into()));
    }
    ChiSquared::new(dof as f64).map_err(|e| Error::InvalidInput(e.to_string()))
}

/// Draws one finite-sample estimate of `true_rss` averaged over `n_samples`.
pub fn synth_estimate<R: Rng + ?Sized>(true_rss: &RssVector, n_samples: usize, rng: &mut R) -> Result<RssVector> {
    let dist = chi2(2 * n_samples)?;
    let scale = 1.0 / (2 * n_samples) as f64;
    let values = true_rss
        .values()
        .iter()
        .map(|&p| {
            // chi2 with >= 2 dof is zero with probability 0, but guard the
            // invariant for pathological generator output anyway
            let c = dist.sample(rng).max(f64::MIN_POSITIVE);
            p * c * scale
        })
        .collect();
    Ok(RssVector(values))
}

/// Same as [`synth_estimate`] but for a raw slice that is known to be valid,
/// writing into `out`. Used in bulk generation.
pub(crate) fn synth_into<R: Rng + ?Sized>(true_rss: &[f64], dist: &ChiSquared<f64>, scale: f64, rng: &mut R, out: &mut Vec<f64>) {
    out.extend(true_rss.iter().map(|&p| p * dist.sample(rng).max(f64::MIN_POSITIVE) * scale));
}

pub(crate) fn chi2_for_samples(n_samples: usize) -> Result<(ChiSquared<f64>, f64)> {
    Ok((chi2(2 * n_samples)?, 1.0 / (2 * n_samples) as f64))
}

/// Sample-mean power `(1/N) * sum |s_n|^2`.
pub fn estimate_rss_from_samples(samples: &[Complex64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples to estimate RSS from".into()));
    }
    Ok(samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64)
}
