use serde::{Deserialize, Serialize};

use super::RecurrentCell;
use crate::nn::{init_matrix, InitScheme, Matrix, ParamSet, RngStream};

/// Vanilla recurrence `h' = tanh(x·W + h·U + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnCellParams {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl RnnCellParams {
    pub fn new(input_dim: usize, hidden: usize, rng: &mut RngStream) -> Self {
        Self {
            w: init_matrix(input_dim, hidden, InitScheme::GlorotUniform, rng),
            u: init_matrix(hidden, hidden, InitScheme::GlorotUniform, rng),
            b: vec![0.0; hidden],
        }
    }
}

impl ParamSet for RnnCellParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice(), self.u.as_slice(), &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_mut_slice(), self.u.as_mut_slice(), &mut self.b]
    }
}

impl RecurrentCell for RnnCellParams {
    const GATES: usize = 1;
    const HAS_CELL_STATE: bool = false;

    fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w: Matrix::zeros(input_dim, hidden),
            u: Matrix::zeros(hidden, hidden),
            b: vec![0.0; hidden],
        }
    }

    fn input_weights(&self) -> &Matrix {
        &self.w
    }

    fn recurrent_weights(&self) -> &Matrix {
        &self.u
    }

    fn bias(&self) -> &[f64] {
        &self.b
    }

    fn parts_mut(&mut self) -> (&mut Matrix, &mut Matrix, &mut [f64]) {
        (&mut self.w, &mut self.u, &mut self.b)
    }

    #[inline]
    fn activate_row(z: &mut [f64], _: &[f64], _: &mut [f64], _: &mut [f64], h: &mut [f64]) {
        for (zj, hj) in z.iter_mut().zip(h.iter_mut()) {
            *zj = zj.tanh();
            *hj = *zj;
        }
    }

    #[inline]
    fn backprop_row(z: &[f64], _: &[f64], _: &[f64], dh: &[f64], _: &mut [f64], dz: &mut [f64]) {
        for ((d, &h), &g) in dz.iter_mut().zip(z).zip(dh) {
            *d = g * (1.0 - h * h);
        }
    }
}
