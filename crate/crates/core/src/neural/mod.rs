//! Small dense-network toolkit: affine layers, BCE on a logit, exact
//! reverse-mode gradients, Adam, and JSON persistence.

mod dense;
pub mod io;
mod loss;
mod matrix;
mod optim;
mod train;

pub use dense::{Activation, BatchTrace, DenseLayer, DenseNetwork};
pub use loss::{bce_with_logit, bce_with_logit_grad, sigmoid};
pub use matrix::{gemm, Matrix};
pub use optim::Adam;
pub use train::{fit, train, EpochRecord, LabeledSet, LossHistory, Objective, TrainConfig};

/// Models whose parameters are a fixed list of flat slices.
pub trait Parameterized {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.param_slices().iter().map(|s| vec![0.0; s.len()]).collect()
    }

    fn num_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }
}
