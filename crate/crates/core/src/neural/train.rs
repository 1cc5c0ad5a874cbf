//! Minibatch training loop with early stopping on validation loss.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{bce_with_logit, bce_with_logit_grad};
use super::matrix::Matrix;
use super::optim::Adam;
use super::{DenseNetwork, Parameterized};
use crate::error::{Error, Result};
use crate::rng::stream_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 200,
            early_stop_patience: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("batch_size and early_stop_patience must be positive".into()));
        }
        if self.max_epochs > 0 && self.early_stop_patience > self.max_epochs {
            return Err(Error::Config("early_stop_patience must not exceed max_epochs".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
}

impl LossHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            s += &format!("{},{},{}\n", e.epoch, e.train_loss, e.val_loss);
        }
        s
    }
}

/// A supervised problem the loop can optimize.
pub trait Objective {
    type Model: Parameterized + Clone;

    fn train_len(&self) -> usize;

    /// Adds the gradient of the summed loss over `batch` to `grads` and
    /// returns the summed loss.
    fn accumulate(&self, model: &Self::Model, batch: &[usize], grads: &mut [Vec<f64>]) -> Result<f64>;

    /// Mean validation loss.
    fn validation_loss(&self, model: &Self::Model) -> Result<f64>;
}

/// Runs Adam on `objective` and returns the parameters with the lowest
/// validation loss together with the per-epoch history.
pub fn fit<O: Objective>(model: O::Model, objective: &O, cfg: &TrainConfig) -> Result<(O::Model, LossHistory)> {
    cfg.validate()?;
    let mut history = LossHistory::default();
    if cfg.max_epochs == 0 {
        return Ok((model, history));
    }
    let n = objective.train_len();
    if n == 0 {
        return Err(Error::InsufficientData("empty training set".into()));
    }
    let mut rng = stream_from_seed(cfg.seed);
    let mut opt = Adam::new(&model, cfg.learning_rate);
    let mut model = model;
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads = model.zero_grads();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            let loss = objective.accumulate(&model, batch, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("loss became {loss} at epoch {epoch}, batch {bi}")));
            }
            total += loss;
            let scale = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= scale));
            opt.step(&mut model, &grads);
        }
        let val_loss = objective.validation_loss(&model)?;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!("validation loss became {val_loss} at epoch {epoch}")));
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: total / n as f64,
            val_loss,
        });
        if val_loss < best_loss {
            best_loss = val_loss;
            best = model.clone();
            history.best_epoch = Some(epoch);
            history.best_val_loss = Some(val_loss);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    Ok((best, history))
}

/// Labelled examples for a single-logit classifier.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<f64>,
}

impl LabeledSet {
    pub fn push(&mut self, input: Vec<f64>, label: f64) {
        self.inputs.push(input);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn batch(&self, idx: &[usize]) -> Matrix {
        let cols = self.inputs[idx[0]].len();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(&self.inputs[i]);
        }
        Matrix::from_vec(idx.len(), cols, data)
    }
}

struct Classification<'a> {
    train: &'a LabeledSet,
    val: &'a LabeledSet,
}

impl Objective for Classification<'_> {
    type Model = DenseNetwork;

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn accumulate(&self, model: &DenseNetwork, batch: &[usize], grads: &mut [Vec<f64>]) -> Result<f64> {
        let trace = model.forward_batch(self.train.batch(batch))?;
        let out = trace.output();
        let mut up = Matrix::zeros(batch.len(), 1);
        let mut loss = 0.0;
        for (r, &i) in batch.iter().enumerate() {
            let z = out.data[r];
            let y = self.train.labels[i];
            loss += bce_with_logit(z, y);
            up.data[r] = bce_with_logit_grad(z, y);
        }
        model.backward_batch(&trace, &up, grads)?;
        Ok(loss)
    }

    fn validation_loss(&self, model: &DenseNetwork) -> Result<f64> {
        let idx: Vec<usize> = (0..self.val.len()).collect();
        let mut loss = 0.0;
        for chunk in idx.chunks(1024) {
            let t = model.forward_batch(self.val.batch(chunk))?;
            for (r, &i) in chunk.iter().enumerate() {
                loss += bce_with_logit(t.output().data[r], self.val.labels[i]);
            }
        }
        Ok(loss / self.val.len() as f64)
    }
}

/// Trains a single-logit network on binary labels with mean BCE.
pub fn train(net: DenseNetwork, train: &LabeledSet, val: &LabeledSet, cfg: &TrainConfig) -> Result<(DenseNetwork, LossHistory)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::InsufficientData("training and validation sets must be nonempty".into()));
    }
    if net.output_dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            actual: net.output_dim(),
        });
    }
    for x in train.inputs.iter().chain(&val.inputs) {
        if x.len() != net.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: net.input_dim(),
                actual: x.len(),
            });
        }
    }
    fit(net, &Classification { train, val }, cfg)
}
