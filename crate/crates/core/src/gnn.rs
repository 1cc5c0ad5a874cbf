//! Message-passing graph network over detection graphs.
//!
//! Node features start as the normalized frame index. Each layer updates
//!
//! ```text
//! h'_v = G1([h_v, sum_{u in N(v)} G2([h_v, h_u])])
//! ```
//!
//! with `G1`, `G2` single dense ReLU layers, and the statistic is an affine
//! map of the mean of the last layer's node features.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DetectionGraph;
use crate::neural::{self, bce_with_logit, bce_with_logit_grad, gemm, Activation, BatchTrace, DenseLayer, DenseNetwork, LossHistory, Matrix, Objective, Parameterized, TrainConfig};
use crate::rng::{SeedTree, GNN_INIT};
use crate::trajectory::Hypothesis;

pub const GNN_KIND: &str = "gnn";
pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_LAYERS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnLayer {
    /// Update network, input `[h_v, aggregate]`.
    pub g1: DenseNetwork,
    /// Message network, input `[h_v, h_u]`.
    pub g2: DenseNetwork,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub layers: Vec<GnnLayer>,
    pub readout: DenseNetwork,
}

fn single<R: Rng + ?Sized>(i: usize, o: usize, act: Activation, rng: &mut R) -> Result<DenseNetwork> {
    DenseNetwork::new(vec![DenseLayer::init(i, o, act, rng)])
}

impl GnnModel {
    pub fn init<R: Rng + ?Sized>(num_layers: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        if num_layers == 0 || hidden == 0 {
            return Err(Error::Config("GNN needs at least one layer and a positive width".into()));
        }
        let mut layers = Vec::with_capacity(num_layers);
        let mut d = 1;
        for _ in 0..num_layers {
            let g2 = single(2 * d, hidden, Activation::Relu, rng)?;
            let g1 = single(d + hidden, hidden, Activation::Relu, rng)?;
            layers.push(GnnLayer { g1, g2 });
            d = hidden;
        }
        let readout = single(hidden, 1, Activation::Identity, rng)?;
        let m = GnnModel { layers, readout };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::ModelFormat("GNN has no message-passing layers".into()));
        }
        let mut d = 1;
        for (i, l) in self.layers.iter().enumerate() {
            let bad = |what: &str| Err(Error::ModelFormat(format!("GNN layer {}: {what}", i + 1)));
            if l.g1.layers().len() != 1 || l.g2.layers().len() != 1 {
                return bad("G1 and G2 must be single dense layers");
            }
            let h = l.g2.output_dim();
            if l.g2.input_dim() != 2 * d {
                return bad("G2 input width must be twice the incoming feature width");
            }
            if l.g1.input_dim() != d + h {
                return bad("G1 input width must be feature width plus message width");
            }
            d = l.g1.output_dim();
        }
        if self.readout.input_dim() != d || self.readout.output_dim() != 1 || self.readout.layers().len() != 1 {
            return Err(Error::ModelFormat("readout must be a single affine map to one output".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        neural::io::to_json(GNN_KIND, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: GnnModel = neural::io::from_json(GNN_KIND, text)?;
        m.check()?;
        Ok(m)
    }
}

impl Parameterized for GnnModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend(l.g1.param_slices());
            v.extend(l.g2.param_slices());
        }
        v.extend(self.readout.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::new();
        for l in &mut self.layers {
            v.extend(l.g1.param_slices_mut());
            v.extend(l.g2.param_slices_mut());
        }
        v.extend(self.readout.param_slices_mut());
        v
    }
}

struct LayerCache {
    h_in: Matrix,
    /// `h W_self^T + b` of G2, per node.
    msg_self: Matrix,
    /// `h W_nbr^T` of G2, per node.
    msg_nbr: Matrix,
    g1: BatchTrace,
}

struct ForwardCache {
    neighbors: Vec<Vec<usize>>,
    layers: Vec<LayerCache>,
    readout: BatchTrace,
}

/// Splits a G2 weight matrix `hidden x 2d` into its self and neighbour halves.
fn split_g2(layer: &DenseLayer) -> (Vec<f64>, Vec<f64>) {
    let d = layer.in_dim / 2;
    let mut ws = Vec::with_capacity(layer.out_dim * d);
    let mut wn = Vec::with_capacity(layer.out_dim * d);
    for o in 0..layer.out_dim {
        let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
        ws.extend_from_slice(&row[..d]);
        wn.extend_from_slice(&row[d..]);
    }
    (ws, wn)
}

fn forward_cached(model: &GnnModel, g: &DetectionGraph) -> Result<(f64, ForwardCache)> {
    let k = g.num_nodes();
    if k == 0 {
        return Err(Error::InvalidInput("graph has no nodes".into()));
    }
    let neighbors: Vec<Vec<usize>> = (0..k).map(|v| g.neighbors(v).collect()).collect();
    let mut h = Matrix::from_vec(k, 1, g.node_index_feature().to_vec());
    let mut layers = Vec::with_capacity(model.layers.len());
    for l in &model.layers {
        let d = h.cols;
        let g2 = &l.g2.layers()[0];
        if g2.in_dim != 2 * d {
            return Err(Error::DimensionMismatch {
                expected: g2.in_dim,
                actual: 2 * d,
            });
        }
        let hid = g2.out_dim;
        let (ws, wn) = split_g2(g2);
        let mut msg_self = Matrix::zeros(k, hid);
        for v in 0..k {
            msg_self.row_mut(v).copy_from_slice(&g2.bias);
        }
        gemm(k, d, hid, 1.0, &h.data, false, &ws, true, 1.0, &mut msg_self.data);
        let mut msg_nbr = Matrix::zeros(k, hid);
        gemm(k, d, hid, 1.0, &h.data, false, &wn, true, 0.0, &mut msg_nbr.data);

        // G1 input: [h_v | sum_u relu(self_v + nbr_u)]
        let mut x1 = Matrix::zeros(k, d + hid);
        for (v, nbrs) in neighbors.iter().enumerate() {
            let row = x1.row_mut(v);
            row[..d].copy_from_slice(h.row(v));
            let agg = &mut row[d..];
            let sv = msg_self.row(v);
            for &u in nbrs {
                for ((a, s), n) in agg.iter_mut().zip(sv).zip(msg_nbr.row(u)) {
                    let z = s + n;
                    if z > 0.0 {
                        *a += z;
                    }
                }
            }
        }
        let g1 = l.g1.forward_batch(x1)?;
        let h_next = g1.output().clone();
        layers.push(LayerCache {
            h_in: h,
            msg_self,
            msg_nbr,
            g1,
        });
        h = h_next;
    }
    let mut mean = vec![0.0; h.cols];
    for v in 0..k {
        for (m, x) in mean.iter_mut().zip(h.row(v)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k as f64);
    let readout = model.readout.forward_batch(Matrix::from_vec(1, mean.len(), mean))?;
    let stat = readout.output().data[0];
    Ok((stat, ForwardCache { neighbors, layers, readout }))
}

/// Spoofing statistic of a detection graph.
pub fn gnn_forward(model: &GnnModel, g: &DetectionGraph) -> Result<f64> {
    Ok(forward_cached(model, g)?.0)
}

fn backward_cached(model: &GnnModel, cache: &ForwardCache, upstream: f64, grads: &mut [Vec<f64>]) -> Result<()> {
    let nl = model.layers.len();
    let (layer_grads, readout_grads) = grads.split_at_mut(4 * nl);
    let dmean = model
        .readout
        .backward_batch(&cache.readout, &Matrix::from_vec(1, 1, vec![upstream]), readout_grads)?;
    let k = cache.neighbors.len();
    let mut dh = Matrix::zeros(k, dmean.cols);
    for v in 0..k {
        for (d, m) in dh.row_mut(v).iter_mut().zip(&dmean.data) {
            *d = m / k as f64;
        }
    }
    for (li, (l, lc)) in model.layers.iter().zip(&cache.layers).enumerate().rev() {
        let lg = &mut layer_grads[4 * li..4 * li + 4];
        let (g1_grads, g2_grads) = lg.split_at_mut(2);
        let dx1 = l.g1.backward_batch(&lc.g1, &dh, g1_grads)?;
        let d = lc.h_in.cols;
        let hid = lc.msg_self.cols;
        let mut dh_prev = Matrix::zeros(k, d);
        let mut d_self = Matrix::zeros(k, hid);
        let mut d_nbr = Matrix::zeros(k, hid);
        for v in 0..k {
            let row = dx1.row(v);
            dh_prev.row_mut(v).copy_from_slice(&row[..d]);
            let dagg = &row[d..];
            let sv = lc.msg_self.row(v);
            for &u in &cache.neighbors[v] {
                let nu = lc.msg_nbr.row(u);
                for j in 0..hid {
                    if sv[j] + nu[j] > 0.0 {
                        d_self.data[v * hid + j] += dagg[j];
                        d_nbr.data[u * hid + j] += dagg[j];
                    }
                }
            }
        }
        // G2 weight gradient: [d_self^T h | d_nbr^T h] per output row
        let mut gws = vec![0.0; hid * d];
        let mut gwn = vec![0.0; hid * d];
        gemm(hid, k, d, 1.0, &d_self.data, true, &lc.h_in.data, false, 0.0, &mut gws);
        gemm(hid, k, d, 1.0, &d_nbr.data, true, &lc.h_in.data, false, 0.0, &mut gwn);
        let gw = &mut g2_grads[0];
        for o in 0..hid {
            for c in 0..d {
                gw[o * 2 * d + c] += gws[o * d + c];
                gw[o * 2 * d + d + c] += gwn[o * d + c];
            }
        }
        let gb = &mut g2_grads[1];
        for v in 0..k {
            for (b, x) in gb.iter_mut().zip(d_self.row(v)) {
                *b += x;
            }
        }
        let (ws, wn) = split_g2(&l.g2.layers()[0]);
        gemm(k, hid, d, 1.0, &d_self.data, false, &ws, false, 1.0, &mut dh_prev.data);
        gemm(k, hid, d, 1.0, &d_nbr.data, false, &wn, false, 1.0, &mut dh_prev.data);
        dh = dh_prev;
    }
    Ok(())
}

/// Gradients of `upstream * statistic` with respect to every parameter, laid
/// out as [`Parameterized::param_slices`].
pub fn gnn_backward(model: &GnnModel, g: &DetectionGraph, upstream: f64) -> Result<Vec<Vec<f64>>> {
    let (_, cache) = forward_cached(model, g)?;
    let mut grads = model.zero_grads();
    backward_cached(model, &cache, upstream, &mut grads)?;
    Ok(grads)
}

/// H1 iff the statistic exceeds the threshold.
pub fn decide(model: &GnnModel, g: &DetectionGraph, threshold: f64) -> Result<Hypothesis> {
    Ok(if gnn_forward(model, g)? > threshold {
        Hypothesis::H1
    } else {
        Hypothesis::H0
    })
}

struct GraphObjective<'a> {
    train: &'a [(DetectionGraph, Hypothesis)],
    val: &'a [(DetectionGraph, Hypothesis)],
}

impl Objective for GraphObjective<'_> {
    type Model = GnnModel;

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn accumulate(&self, model: &GnnModel, batch: &[usize], grads: &mut [Vec<f64>]) -> Result<f64> {
        let mut loss = 0.0;
        for &i in batch {
            let (g, h) = &self.train[i];
            let (s, cache) = forward_cached(model, g)?;
            loss += bce_with_logit(s, h.label());
            backward_cached(model, &cache, bce_with_logit_grad(s, h.label()), grads)?;
        }
        Ok(loss)
    }

    fn validation_loss(&self, model: &GnnModel) -> Result<f64> {
        let mut loss = 0.0;
        for (g, h) in self.val {
            loss += bce_with_logit(gnn_forward(model, g)?, h.label());
        }
        Ok(loss / self.val.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GnnArchitecture {
    pub layers: usize,
    pub hidden: usize,
}

impl Default for GnnArchitecture {
    fn default() -> Self {
        GnnArchitecture {
            layers: DEFAULT_LAYERS,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

/// Trains with BCE on the statistic as a logit (H1 = 1); returns the
/// best-validation parameters.
pub fn train_gnn(
    train: &[(DetectionGraph, Hypothesis)],
    val: &[(DetectionGraph, Hypothesis)],
    arch: &GnnArchitecture,
    cfg: &TrainConfig,
) -> Result<(GnnModel, LossHistory)> {
    let has = |h| train.iter().any(|(_, l)| *l == h);
    if !has(Hypothesis::H0) || !has(Hypothesis::H1) {
        return Err(Error::Config("GNN training set must contain both H0 and H1 graphs".into()));
    }
    if val.is_empty() {
        return Err(Error::InsufficientData("GNN validation set is empty".into()));
    }
    let mut rng = SeedTree::new(cfg.seed).stream(GNN_INIT, 0);
    let model = GnnModel::init(arch.layers, arch.hidden, &mut rng)?;
    neural::fit(model, &GraphObjective { train, val }, cfg)
}
