use serde::{Deserialize, Serialize};

use super::RecurrentCell;
use crate::nn::{init_matrix, sigmoid, InitScheme, Matrix, NnError, ParamSet, RngStream};

/// Gate blocks, in the order they are packed along the `4H` axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Output = 2,
    Candidate = 3,
}

/// Parameters of one LSTM layer. The four gates are packed side by side:
/// `w` is `d × 4H`, `u` is `H × 4H` and `b` has `4H` entries, with block `g`
/// occupying columns `[g·H, (g+1)·H)` in [`Gate`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl LstmCellParams {
    /// Glorot-uniform input and recurrent weights, forget-gate bias 1, other
    /// biases 0.
    pub fn new(input_dim: usize, hidden: usize, rng: &mut RngStream) -> Self {
        let w = init_matrix(input_dim, 4 * hidden, InitScheme::GlorotUniform, rng);
        let u = init_matrix(hidden, 4 * hidden, InitScheme::GlorotUniform, rng);
        let mut b = vec![0.0; 4 * hidden];
        b[..hidden].fill(1.0);
        Self { w, u, b }
    }

    pub fn gate_bias(&self, gate: Gate) -> &[f64] {
        let h = self.u.rows();
        &self.b[gate as usize * h..(gate as usize + 1) * h]
    }

    pub fn gate_bias_mut(&mut self, gate: Gate) -> &mut [f64] {
        let h = self.u.rows();
        &mut self.b[gate as usize * h..(gate as usize + 1) * h]
    }
}

impl ParamSet for LstmCellParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice(), self.u.as_slice(), &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_mut_slice(), self.u.as_mut_slice(), &mut self.b]
    }
}

impl RecurrentCell for LstmCellParams {
    const GATES: usize = 4;
    const HAS_CELL_STATE: bool = true;

    fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w: Matrix::zeros(input_dim, 4 * hidden),
            u: Matrix::zeros(hidden, 4 * hidden),
            b: vec![0.0; 4 * hidden],
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
    fn activate_row(
        z: &mut [f64],
        c_prev: &[f64],
        c: &mut [f64],
        tanh_c: &mut [f64],
        h: &mut [f64],
    ) {
        let hd = h.len();
        let (sig, cand) = z.split_at_mut(3 * hd);
        sig.iter_mut().for_each(|v| *v = sigmoid(*v));
        cand.iter_mut().for_each(|v| *v = v.tanh());
        for j in 0..hd {
            let (f, i, o, g) = (z[j], z[hd + j], z[2 * hd + j], z[3 * hd + j]);
            // Additive memory update.
            c[j] = f * c_prev[j] + i * g;
            tanh_c[j] = c[j].tanh();
            h[j] = o * tanh_c[j];
        }
    }

    #[inline]
    fn backprop_row(
        z: &[f64],
        c_prev: &[f64],
        tanh_c: &[f64],
        dh: &[f64],
        dc: &mut [f64],
        dz: &mut [f64],
    ) {
        let hd = dh.len();
        for j in 0..hd {
            let (f, i, o, g) = (z[j], z[hd + j], z[2 * hd + j], z[3 * hd + j]);
            let tc = tanh_c[j];
            let dc_j = dc[j] + dh[j] * o * (1.0 - tc * tc);
            dz[j] = dc_j * c_prev[j] * f * (1.0 - f);
            dz[hd + j] = dc_j * g * i * (1.0 - i);
            dz[2 * hd + j] = dh[j] * tc * o * (1.0 - o);
            dz[3 * hd + j] = dc_j * i * (1.0 - g * g);
            dc[j] = dc_j * f;
        }
    }
}

/// Hidden and cell state of a single sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Intermediate values of one single-sequence step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellCache {
    /// Pre-activations `[f | i | o | g]` before the nonlinearity.
    pub preactivations: Vec<f64>,
    /// Activated gates in the same layout.
    pub gates: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

impl LstmCellCache {
    pub fn gate(&self, gate: Gate) -> &[f64] {
        let h = self.gates.len() / 4;
        &self.gates[gate as usize * h..(gate as usize + 1) * h]
    }
}

/// One LSTM step for a single sequence.
pub fn lstm_cell_forward(
    x_t: &[f64],
    state: &LstmState,
    p: &LstmCellParams,
) -> Result<(LstmState, LstmCellCache), NnError> {
    let hd = p.hidden_dim();
    if x_t.len() != p.input_dim() || state.h.len() != hd || state.c.len() != hd {
        return Err(NnError::ShapeMismatch(format!(
            "LSTM step: input {}, state ({}, {}) for d={}, H={hd}",
            x_t.len(),
            state.h.len(),
            state.c.len(),
            p.input_dim()
        )));
    }
    let x = Matrix::from_vec(1, x_t.len(), x_t.to_vec())?;
    let h = Matrix::from_vec(1, hd, state.h.clone())?;
    let mut z = x.matmul(&p.w)?;
    z.add_assign(&h.matmul(&p.u)?)?;
    z.add_row_broadcast(&p.b)?;
    let preactivations = z.as_slice().to_vec();

    let mut gates = preactivations.clone();
    let mut next = LstmState::zeros(hd);
    let mut tanh_c = vec![0.0; hd];
    LstmCellParams::activate_row(&mut gates, &state.c, &mut next.c, &mut tanh_c, &mut next.h);
    Ok((
        next,
        LstmCellCache {
            preactivations,
            gates,
            c_prev: state.c.clone(),
            tanh_c,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_parameters_zero_state() {
        let p = LstmCellParams::zeros(2, 3);
        let (s, cache) = lstm_cell_forward(&[0.7, -1.2], &LstmState::zeros(3), &p).unwrap();
        for gate in [Gate::Forget, Gate::Input, Gate::Output] {
            assert!(cache.gate(gate).iter().all(|&v| v == 0.5));
        }
        assert!(cache.gate(Gate::Candidate).iter().all(|&v| v == 0.0));
        assert_eq!(s.c, vec![0.0; 3]);
        assert_eq!(s.h, vec![0.0; 3]);
    }

    #[test]
    fn saturated_forget_gate_retains_memory() {
        let mut p = LstmCellParams::zeros(1, 2);
        p.gate_bias_mut(Gate::Forget).fill(10.0);
        let state = LstmState {
            h: vec![0.0, 0.0],
            c: vec![1.0, -2.0],
        };
        let (s, _) = lstm_cell_forward(&[0.3], &state, &p).unwrap();
        // Input gate 0.5 times candidate tanh(0) adds nothing; f = σ(10).
        let f = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((s.c[0] - f).abs() < 1e-15);
        assert!((s.c[1] + 2.0 * f).abs() < 1e-15);
        assert!((s.c[0] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn gates_strictly_inside_unit_interval() {
        let mut rng = RngStream::new(12);
        let p = LstmCellParams::new(3, 4, &mut rng);
        let state = LstmState {
            h: vec![0.1, -0.4, 0.9, 0.0],
            c: vec![2.0, -3.0, 0.5, 0.0],
        };
        let (_, cache) = lstm_cell_forward(&[5.0, -5.0, 1.0], &state, &p).unwrap();
        assert!(cache.gates[..12].iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn new_sets_forget_bias_to_one() {
        let p = LstmCellParams::new(1, 5, &mut RngStream::new(0));
        assert!(p.gate_bias(Gate::Forget).iter().all(|&v| v == 1.0));
        for gate in [Gate::Input, Gate::Output, Gate::Candidate] {
            assert!(p.gate_bias(gate).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn shape_mismatch_reported() {
        let p = LstmCellParams::zeros(2, 3);
        assert!(matches!(
            lstm_cell_forward(&[1.0], &LstmState::zeros(3), &p),
            Err(NnError::ShapeMismatch(_))
        ));
    }
}
