//! Trainable architectures behind [`super::ForecastModel`].

use serde::{Deserialize, Serialize};

use crate::nn::{
    activate, dense_backward, dense_forward, mse_loss, Activation, DenseParams, InitScheme, Matrix,
    Mode, NnError, ParamSet, RngStream,
};
use crate::recurrent::{sequence_backward, sequence_forward, RecurrentCell, SequenceBatch};

/// A network mapping a batch of windows (`n × T`) to one output per row.
pub trait Network: ParamSet + Clone {
    /// Forward pass. Train mode applies dropout using `rng`.
    fn forward(&self, x: &Matrix, mode: Mode, rng: &mut RngStream) -> Result<Vec<f64>, NnError>;

    /// MSE loss on `(x, y)` and its gradient, shaped like `self`.
    fn loss_and_grad(
        &self,
        x: &Matrix,
        y: &[f64],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(f64, Self), NnError>;
}

/// Feed-forward regressor: `T → 100 (relu) → 50 (relu) → 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnNet {
    pub layers: Vec<DenseParams>,
}

impl AnnNet {
    pub const HIDDEN: [usize; 2] = [100, 50];

    pub fn new(input_dim: usize, hidden: &[usize], rng: &mut RngStream) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut d = input_dim;
        for &h in hidden.iter().chain(&[1]) {
            layers.push(DenseParams::new(d, h, InitScheme::GlorotUniform, rng));
            d = h;
        }
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    fn activation(&self, l: usize) -> Activation {
        if l + 1 == self.layers.len() {
            Activation::Identity
        } else {
            Activation::Relu
        }
    }
}

impl ParamSet for AnnNet {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers.tensors()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.tensors_mut()
    }
}

impl Network for AnnNet {
    fn forward(&self, x: &Matrix, _: Mode, _: &mut RngStream) -> Result<Vec<f64>, NnError> {
        let mut a = x.clone();
        for (l, p) in self.layers.iter().enumerate() {
            a = activate(self.activation(l), &dense_forward(&a, p)?);
        }
        Ok(a.into_vec())
    }

    fn loss_and_grad(
        &self,
        x: &Matrix,
        y: &[f64],
        _: Mode,
        _: &mut RngStream,
    ) -> Result<(f64, Self), NnError> {
        // inputs[l] feeds layer l; pre[l] is its affine output.
        let mut inputs = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (l, p) in self.layers.iter().enumerate() {
            let z = dense_forward(&inputs[l], p)?;
            inputs.push(activate(self.activation(l), &z));
            pre.push(z);
        }
        let out = inputs.pop().expect("at least one layer");
        let (loss, dout) = mse_loss(out.as_slice(), y)?;

        let mut grads = Vec::with_capacity(self.layers.len());
        let mut dy = Matrix::from_vec(dout.len(), 1, dout)?;
        for l in (0..self.layers.len()).rev() {
            if self.activation(l) == Activation::Relu {
                for (g, &z) in dy.as_mut_slice().iter_mut().zip(pre[l].as_slice()) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let (g, dx) = dense_backward(&inputs[l], &self.layers[l], &dy)?;
            grads.push(g);
            dy = dx;
        }
        grads.reverse();
        Ok((loss, Self { layers: grads }))
    }
}

/// Stacked recurrent layers with a linear head on the last hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentNet<C> {
    pub cells: Vec<C>,
    pub head: DenseParams,
    pub dropout_rate: f64,
}

impl<C: RecurrentCell> RecurrentNet<C> {
    /// Builds `layers` cells of width `hidden` over scalar inputs, with `init`
    /// creating one cell from `(input_dim, hidden, rng)`.
    pub fn new(
        layers: usize,
        hidden: usize,
        dropout_rate: f64,
        rng: &mut RngStream,
        init: impl Fn(usize, usize, &mut RngStream) -> C,
    ) -> Self {
        let cells = (0..layers)
            .map(|l| init(if l == 0 { 1 } else { hidden }, hidden, rng))
            .collect();
        let head = DenseParams::new(hidden, 1, InitScheme::GlorotUniform, rng);
        Self {
            cells,
            head,
            dropout_rate,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.head.in_dim()
    }
}

impl<C: RecurrentCell> ParamSet for RecurrentNet<C> {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.cells.tensors();
        t.extend(self.head.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.cells.tensors_mut();
        t.extend(self.head.tensors_mut());
        t
    }
}

// Bounds the memory held by per-step caches during inference.
const INFER_CHUNK: usize = 256;

impl<C: RecurrentCell> Network for RecurrentNet<C> {
    fn forward(&self, x: &Matrix, mode: Mode, rng: &mut RngStream) -> Result<Vec<f64>, NnError> {
        let mut out = Vec::with_capacity(x.rows());
        let rows: Vec<usize> = (0..x.rows()).collect();
        for chunk in rows.chunks(INFER_CHUNK) {
            let seq = SequenceBatch::from_windows(&x.select_rows(chunk));
            let (h, _) = sequence_forward(&seq, &self.cells, self.dropout_rate, mode, rng)?;
            out.extend(dense_forward(&h, &self.head)?.into_vec());
        }
        Ok(out)
    }

    fn loss_and_grad(
        &self,
        x: &Matrix,
        y: &[f64],
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(f64, Self), NnError> {
        let seq = SequenceBatch::from_windows(x);
        let (h, cache) = sequence_forward(&seq, &self.cells, self.dropout_rate, mode, rng)?;
        let out = dense_forward(&h, &self.head)?;
        let (loss, dout) = mse_loss(out.as_slice(), y)?;
        let dout = Matrix::from_vec(dout.len(), 1, dout)?;
        let (head, dh) = dense_backward(&h, &self.head, &dout)?;
        let (cells, _) = sequence_backward(&self.cells, &cache, &dh)?;
        Ok((
            loss,
            Self {
                cells,
                head,
                dropout_rate: self.dropout_rate,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use crate::recurrent::LstmCellParams;

    fn windows(n: usize, t: usize, rng: &mut RngStream) -> (Matrix, Vec<f64>) {
        let data = (0..n * t).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let y = (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        (Matrix::from_vec(n, t, data).unwrap(), y)
    }

    #[test]
    fn ann_shapes_match_architecture() {
        let net = AnnNet::new(30, &AnnNet::HIDDEN, &mut RngStream::new(0));
        let dims: Vec<_> = net
            .layers
            .iter()
            .map(|l| (l.in_dim(), l.out_dim()))
            .collect();
        assert_eq!(dims, vec![(30, 100), (100, 50), (50, 1)]);
    }

    #[test]
    fn ann_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(3);
        let net = AnnNet::new(4, &[6, 5], &mut rng);
        let (x, y) = windows(7, 4, &mut rng);
        let eval = |flat: &[f64]| {
            let mut n = net.clone();
            n.assign_flat(flat).unwrap();
            let (l, g) = n
                .loss_and_grad(&x, &y, Mode::Train, &mut RngStream::new(0))
                .unwrap();
            (l, g.flatten())
        };
        assert!(grad_check(eval, &net.flatten(), 1e-6).unwrap() < 1e-5);
    }

    #[test]
    fn lstm_net_gradient_with_head() {
        let mut rng = RngStream::new(5);
        let net = RecurrentNet::new(2, 3, 0.0, &mut rng, LstmCellParams::new);
        let (x, y) = windows(3, 4, &mut rng);
        let eval = |flat: &[f64]| {
            let mut n = net.clone();
            n.assign_flat(flat).unwrap();
            let (l, g) = n
                .loss_and_grad(&x, &y, Mode::Train, &mut RngStream::new(0))
                .unwrap();
            (l, g.flatten())
        };
        assert!(grad_check(eval, &net.flatten(), 1e-5).unwrap() < 1e-4);
    }

    #[test]
    fn chunked_inference_matches_single_pass() {
        let mut rng = RngStream::new(9);
        let net = RecurrentNet::new(1, 4, 0.2, &mut rng, LstmCellParams::new);
        let (x, _) = windows(INFER_CHUNK + 3, 5, &mut rng);
        let all = net
            .forward(&x, Mode::Infer, &mut RngStream::new(0))
            .unwrap();
        let one = net
            .forward(
                &x.select_rows(&[INFER_CHUNK + 1]),
                Mode::Infer,
                &mut RngStream::new(0),
            )
            .unwrap();
        assert_eq!(all[INFER_CHUNK + 1], one[0]);
    }
}
