use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{gemm, Matrix};
use super::Parameterized;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu { slope: f64 },
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            // keeps NaN visible, unlike f64::max
            Activation::Relu => {
                if z < 0.0 {
                    0.0
                } else {
                    z
                }
            }
            Activation::LeakyRelu { slope } => {
                if z >= 0.0 {
                    z
                } else {
                    slope * z
                }
            }
        }
    }

    /// Derivative at pre-activation `z` (0 is taken on the positive branch
    /// for leaky ReLU and as 0 for ReLU).
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if z >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
        }
    }
}

/// Affine map followed by an elementwise activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        DenseLayer {
            in_dim,
            out_dim,
            activation,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Weights and biases uniform in `±1/sqrt(in_dim)`.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim, activation);
        for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *w = rng.gen_range(-bound..bound);
        }
        layer
    }

    fn check(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::ModelFormat("layer dimensions must be positive".into()));
        }
        if self.weights.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(Error::ModelFormat(format!(
                "layer {}x{} has {} weights and {} biases",
                self.out_dim,
                self.in_dim,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if !self.weights.iter().chain(&self.bias).all(|v| v.is_finite()) {
            return Err(Error::ModelFormat("non-finite parameter".into()));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !slope.is_finite() {
                return Err(Error::ModelFormat("non-finite leaky slope".into()));
            }
        }
        Ok(())
    }
}

/// Feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct DenseNetwork {
    layers: Vec<DenseLayer>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    layers: Vec<DenseLayer>,
}

impl TryFrom<NetworkRepr> for DenseNetwork {
    type Error = Error;
    fn try_from(r: NetworkRepr) -> Result<Self> {
        DenseNetwork::new(r.layers)
    }
}

impl From<DenseNetwork> for NetworkRepr {
    fn from(n: DenseNetwork) -> Self {
        NetworkRepr { layers: n.layers }
    }
}

/// Activations kept from a batched forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchTrace {
    input: Matrix,
    pre: Vec<Matrix>,
    post: Vec<Matrix>,
}

impl BatchTrace {
    pub fn output(&self) -> &Matrix {
        self.post.last().unwrap_or(&self.input)
    }

    pub fn input(&self) -> &Matrix {
        &self.input
    }
}

impl DenseNetwork {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ModelFormat("network has no layers".into()));
        }
        for l in &layers {
            l.check()?;
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim != w[1].in_dim {
                return Err(Error::ModelFormat(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    i,
                    w[0].out_dim,
                    i + 1,
                    w[1].in_dim
                )));
            }
        }
        Ok(DenseNetwork { layers })
    }

    /// Randomly initialized network with the given widths; `hidden` is the
    /// activation of every layer except the last, which uses `output`.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config("a network needs at least input and output widths".into()));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                DenseLayer::init(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        DenseNetwork::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim).unwrap_or(0)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let mut x = input.to_vec();
        for l in &self.layers {
            let mut y = l.bias.clone();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &l.weights[o * l.in_dim..(o + 1) * l.in_dim];
                *yo += row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
                *yo = l.activation.apply(*yo);
            }
            x = y;
        }
        Ok(x)
    }

    /// Forward pass over the rows of `input`, keeping what backward needs.
    pub fn forward_batch(&self, input: Matrix) -> Result<BatchTrace> {
        if input.cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.cols,
            });
        }
        let b = input.rows;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Matrix> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let x = post.last().unwrap_or(&input);
            let mut z = Matrix::zeros(b, l.out_dim);
            for r in 0..b {
                z.row_mut(r).copy_from_slice(&l.bias);
            }
            gemm(b, l.in_dim, l.out_dim, 1.0, &x.data, false, &l.weights, true, 1.0, &mut z.data);
            let mut a = z.clone();
            for v in a.data.iter_mut() {
                *v = l.activation.apply(*v);
            }
            pre.push(z);
            post.push(a);
        }
        Ok(BatchTrace { input, pre, post })
    }

    /// Reverse pass: accumulates parameter gradients into `grads` (laid out
    /// as [`Parameterized::param_slices`]) and returns the gradient with
    /// respect to the batch input.
    pub fn backward_batch(&self, trace: &BatchTrace, upstream: &Matrix, grads: &mut [Vec<f64>]) -> Result<Matrix> {
        if upstream.cols != self.output_dim() || upstream.rows != trace.input.rows {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                actual: upstream.cols,
            });
        }
        if grads.len() != 2 * self.layers.len() {
            return Err(Error::DimensionMismatch {
                expected: 2 * self.layers.len(),
                actual: grads.len(),
            });
        }
        let b = upstream.rows;
        let mut delta = upstream.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre[i];
            for (d, &zv) in delta.data.iter_mut().zip(&z.data) {
                *d *= l.activation.derivative(zv);
            }
            let x = if i == 0 { &trace.input } else { &trace.post[i - 1] };
            let (gw, rest) = grads[2 * i..].split_at_mut(1);
            // dW += delta^T x
            gemm(l.out_dim, b, l.in_dim, 1.0, &delta.data, true, &x.data, false, 1.0, &mut gw[0]);
            let gb = &mut rest[0];
            for r in 0..b {
                for (g, d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            let mut next = Matrix::zeros(b, l.in_dim);
            gemm(b, l.out_dim, l.in_dim, 1.0, &delta.data, false, &l.weights, false, 0.0, &mut next.data);
            delta = next;
        }
        Ok(delta)
    }

    /// Single-sample reverse pass: returns `(parameter gradients, input gradient)`.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        let trace = self.forward_batch(Matrix::from_vec(1, input.len(), input.to_vec()))?;
        let mut grads = self.zero_grads();
        let up = Matrix::from_vec(1, upstream.len(), upstream.to_vec());
        let dx = self.backward_batch(&trace, &up, &mut grads)?;
        Ok((grads, dx.data))
    }
}

impl Parameterized for DenseNetwork {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_from_seed;

    #[test]
    fn identity_layer_passes_input() {
        let mut l = DenseLayer::zeros(3, 3, Activation::Identity);
        for i in 0..3 {
            l.weights[i * 3 + i] = 1.0;
        }
        let net = DenseNetwork::new(vec![l]).unwrap();
        assert_eq!(net.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn relu_clamps() {
        let l = DenseLayer {
            in_dim: 1,
            out_dim: 1,
            activation: Activation::Relu,
            weights: vec![2.0],
            bias: vec![1.0],
        };
        let net = DenseNetwork::new(vec![l]).unwrap();
        assert_eq!(net.forward(&[-3.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn leaky_relu_slope() {
        assert_eq!(Activation::LeakyRelu { slope: 0.01 }.apply(-1.0), -0.01);
    }

    #[test]
    fn dimension_mismatch() {
        let mut rng = stream_from_seed(0);
        let net = DenseNetwork::init(&[3, 4, 1], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(net.backward(&[1.0, 2.0], &[1.0]).is_err());
        assert!(DenseNetwork::new(vec![
            DenseLayer::zeros(2, 3, Activation::Relu),
            DenseLayer::zeros(4, 1, Activation::Identity)
        ])
        .is_err());
    }

    #[test]
    fn batch_matches_single() {
        let mut rng = stream_from_seed(5);
        let net = DenseNetwork::init(&[4, 8, 8, 2], Activation::LeakyRelu { slope: 0.01 }, Activation::Identity, &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..5).map(|i| (0..4).map(|j| ((i * 4 + j) as f64).cos()).collect()).collect();
        let m = Matrix::from_vec(5, 4, rows.concat());
        let t = net.forward_batch(m).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let y = net.forward(r).unwrap();
            for (a, b) in y.iter().zip(t.output().row(i)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = stream_from_seed(6);
        let net = DenseNetwork::init(&[3, 5, 1], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let (g, dx) = net.backward(&[0.3, -0.2, 1.0], &[0.0]).unwrap();
        assert!(g.iter().flatten().all(|&v| v == 0.0));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_gradient() {
        let l = DenseLayer {
            in_dim: 3,
            out_dim: 1,
            activation: Activation::Identity,
            weights: vec![0.5, -1.0, 2.0],
            bias: vec![0.1],
        };
        let net = DenseNetwork::new(vec![l]).unwrap();
        let x = [1.0, 2.0, -3.0];
        let (g, dx) = net.backward(&x, &[1.0]).unwrap();
        assert_eq!(g[0], x.to_vec());
        assert_eq!(g[1], vec![1.0]);
        assert_eq!(dx, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn finite_inputs_stay_finite() {
        let mut rng = stream_from_seed(8);
        let net = DenseNetwork::init(&[2, 16, 1], Activation::LeakyRelu { slope: 0.2 }, Activation::Identity, &mut rng).unwrap();
        for x in [[1e6, -1e6], [0.0, 0.0], [-1e-300, 1e300]] {
            assert!(net.forward(&x).unwrap().iter().all(|v| v.is_finite()));
        }
    }
}
