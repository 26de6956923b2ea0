//! Building blocks for the from-scratch networks: matrices, activations,
//! dropout, loss, initialization, the Adam optimizer and gradient checking.

mod activation;
mod adam;
mod dense;
mod dropout;
mod gradcheck;
mod init;
mod loss;
mod matrix;
mod rng;

pub use activation::{activate, activate_grad, sigmoid, Activation};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use dense::{dense_backward, dense_forward, DenseGrads, DenseParams};
pub use dropout::{dropout, dropout_backward, DropoutMask, Mode};
pub use gradcheck::grad_check;
pub use init::{init_matrix, InitScheme};
pub use loss::mse_loss;
pub use matrix::{gemm, gemm_slices, Matrix};
pub use rng::RngStream;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("cache does not match the network: {0}")]
    CacheMismatch(String),
    #[error("loss function returned {0} and then {1} at the same parameters")]
    NonDeterministicLoss(f64, f64),
}

/// A set of named parameter tensors, visited in a fixed order.
///
/// Gradients are stored in the same structure as the parameters they belong
/// to, so the optimizer can zip the two visit orders together.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Concatenation of every tensor in visit order.
    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for t in self.tensors() {
            out.extend_from_slice(t);
        }
        out
    }

    /// Inverse of [`ParamSet::flatten`].
    fn assign_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        let total = self.num_params();
        if flat.len() != total {
            return Err(NnError::LengthMismatch(flat.len(), total));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

impl<P: ParamSet> ParamSet for Vec<P> {
    fn tensors(&self) -> Vec<&[f64]> {
        self.iter().flat_map(|p| p.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.iter_mut().flat_map(|p| p.tensors_mut()).collect()
    }
}
