use serde::{Deserialize, Serialize};

use super::{gemm, init_matrix, InitScheme, Matrix, NnError, ParamSet, RngStream};

/// Affine layer `y = x·W + b` with `W` of shape `in_dim × out_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseParams {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type DenseGrads = DenseParams;

impl DenseParams {
    pub fn new(in_dim: usize, out_dim: usize, scheme: InitScheme, rng: &mut RngStream) -> Self {
        Self {
            weights: init_matrix(in_dim, out_dim, scheme, rng),
            bias: vec![0.0; out_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weights: Matrix::zeros(self.in_dim(), self.out_dim()),
            bias: vec![0.0; self.out_dim()],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

impl ParamSet for DenseParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.weights.as_slice(), &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.as_mut_slice(), &mut self.bias]
    }
}

pub fn dense_forward(x: &Matrix, p: &DenseParams) -> Result<Matrix, NnError> {
    if x.cols() != p.in_dim() || p.bias.len() != p.out_dim() {
        return Err(NnError::ShapeMismatch(format!(
            "input with {} features into a {}x{} layer",
            x.cols(),
            p.in_dim(),
            p.out_dim()
        )));
    }
    let mut y = x.matmul(&p.weights)?;
    y.add_row_broadcast(&p.bias)?;
    Ok(y)
}

/// Reverse pass of [`dense_forward`]: returns parameter gradients and `dL/dx`.
pub fn dense_backward(
    x: &Matrix,
    p: &DenseParams,
    dy: &Matrix,
) -> Result<(DenseGrads, Matrix), NnError> {
    if dy.rows() != x.rows() || dy.cols() != p.out_dim() {
        return Err(NnError::ShapeMismatch(format!(
            "upstream gradient {:?} for a batch of {} into {} outputs",
            dy.shape(),
            x.rows(),
            p.out_dim()
        )));
    }
    let mut grads = p.zeros_like();
    gemm(x, true, dy, false, &mut grads.weights, 0.0)?;
    grads.bias = dy.column_sums();
    let dx = dy.matmul_t(&p.weights)?;
    Ok((grads, dx))
}
