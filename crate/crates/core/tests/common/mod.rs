//! Helpers shared by integration test targets.
#![allow(dead_code)]

use stackcast::models::{AnnNet, Network};
use stackcast::nn::{grad_check, Matrix, Mode, ParamSet, RngStream};
use stackcast::recurrent::{
    lstm_backward, lstm_sequence_forward, rnn_backward, rnn_sequence_forward, LstmCellParams,
    RnnCellParams, SequenceBatch,
};

pub fn random_batch(
    batch: usize,
    steps: usize,
    features: usize,
    rng: &mut RngStream,
) -> SequenceBatch {
    let data = (0..batch * steps * features)
        .map(|_| rng.uniform_in(-1.0, 1.0))
        .collect();
    SequenceBatch::new(batch, steps, features, data).unwrap()
}

pub fn random_readout(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.uniform_in(-1.0, 1.0))
            .collect(),
    )
    .unwrap()
}

/// Loss = Σ out ⊙ R, so dL/dout = R.
pub fn linear_loss(out: &Matrix, readout: &Matrix) -> f64 {
    out.as_slice()
        .iter()
        .zip(readout.as_slice())
        .map(|(a, b)| a * b)
        .sum()
}

pub fn lstm_error(
    seed: u64,
    input: usize,
    layer_sizes: &[usize],
    batch: usize,
    steps: usize,
    rate: f64,
) -> f64 {
    let mut rng = RngStream::new(seed);
    let mut layers = Vec::new();
    let mut d = input;
    for &h in layer_sizes {
        let mut cell = LstmCellParams::new(d, h, &mut rng);
        // Non-trivial biases so every gate is exercised away from its initial value.
        for v in &mut cell.b {
            *v += rng.uniform_in(-0.5, 0.5);
        }
        layers.push(cell);
        d = h;
    }
    let x = random_batch(batch, steps, input, &mut rng);
    let readout = random_readout(batch, d, &mut rng);
    let template = layers.clone();
    let eval = |flat: &[f64]| {
        let mut net = template.clone();
        net.assign_flat(flat).unwrap();
        let mut drop_rng = RngStream::new(seed ^ 0xd20);
        let (out, cache) =
            lstm_sequence_forward(&x, &net, rate, Mode::Train, &mut drop_rng).unwrap();
        let (grads, _) = lstm_backward(&net, &cache, &readout).unwrap();
        (linear_loss(&out, &readout), grads.flatten())
    };
    grad_check(eval, &layers.flatten(), 1e-5).unwrap()
}

pub fn rnn_error(seed: u64, hidden: usize, batch: usize, steps: usize) -> f64 {
    let mut rng = RngStream::new(seed);
    let mut cell = RnnCellParams::new(1, hidden, &mut rng);
    for v in &mut cell.b {
        *v = rng.uniform_in(-0.5, 0.5);
    }
    let layers = vec![cell];
    let x = random_batch(batch, steps, 1, &mut rng);
    let readout = random_readout(batch, hidden, &mut rng);
    let template = layers.clone();
    let eval = |flat: &[f64]| {
        let mut net = template.clone();
        net.assign_flat(flat).unwrap();
        let (out, cache) =
            rnn_sequence_forward(&x, &net, 0.0, Mode::Infer, &mut RngStream::new(0)).unwrap();
        let (grads, _) = rnn_backward(&net, &cache, &readout).unwrap();
        (linear_loss(&out, &readout), grads.flatten())
    };
    grad_check(eval, &layers.flatten(), 1e-5).unwrap()
}

/// Dense relu network with an identity output and MSE loss.
pub fn ann_error(seed: u64, input: usize, hidden: &[usize], batch: usize) -> f64 {
    let mut rng = RngStream::new(seed);
    let net = AnnNet::new(input, hidden, &mut rng);
    let x = random_readout(batch, input, &mut rng);
    let y: Vec<f64> = (0..batch).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
    let eval = |flat: &[f64]| {
        let mut n = net.clone();
        n.assign_flat(flat).unwrap();
        let (loss, grads) = n
            .loss_and_grad(&x, &y, Mode::Train, &mut RngStream::new(0))
            .unwrap();
        (loss, grads.flatten())
    };
    grad_check(eval, &net.flatten(), 1e-5).unwrap()
}
