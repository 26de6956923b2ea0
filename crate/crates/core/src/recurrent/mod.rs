//! Recurrent sequence networks (LSTM and vanilla tanh RNN) with full
//! backpropagation through time.
//!
//! Both cell types share the affine form `z = x·W + h·U + b` followed by a
//! cell-specific nonlinearity, so one stacked driver serves both. Layer `l`
//! consumes the per-step hidden outputs of layer `l - 1` (after dropout),
//! every sequence starts from a zero state, and the network output is the
//! top layer's hidden state at the final step (after dropout).
//!
//! Internally a layer is processed over the whole sequence at once with rows
//! ordered step-major (`row = t·batch + b`): the input projection and all
//! weight gradients are single large products, and only `h·U` runs step by
//! step.

mod lstm;
mod rnn;

pub use lstm::{lstm_cell_forward, Gate, LstmCellCache, LstmCellParams, LstmState};
pub use rnn::RnnCellParams;

use crate::nn::{
    dropout, dropout_backward, gemm, gemm_slices, DropoutMask, Matrix, Mode, NnError, ParamSet,
    RngStream,
};

/// A batch of equally long sequences, laid out `[sequence][step][feature]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    batch: usize,
    steps: usize,
    features: usize,
    data: Vec<f64>,
}

impl SequenceBatch {
    pub fn new(
        batch: usize,
        steps: usize,
        features: usize,
        data: Vec<f64>,
    ) -> Result<Self, NnError> {
        if data.len() != batch * steps * features {
            return Err(NnError::ShapeMismatch(format!(
                "{} values for {batch} sequences of {steps} steps x {features} features",
                data.len()
            )));
        }
        Ok(Self {
            batch,
            steps,
            features,
            data,
        })
    }

    /// Treats each row of `windows` as a univariate sequence.
    pub fn from_windows(windows: &Matrix) -> Self {
        Self {
            batch: windows.rows(),
            steps: windows.cols(),
            features: 1,
            data: windows.as_slice().to_vec(),
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Values of sequence `b` at step `t`.
    pub fn at(&self, b: usize, t: usize) -> &[f64] {
        let start = (b * self.steps + t) * self.features;
        &self.data[start..start + self.features]
    }

    fn to_step_major(&self) -> Matrix {
        let mut m = Matrix::zeros(self.steps * self.batch, self.features);
        for t in 0..self.steps {
            for b in 0..self.batch {
                m.row_mut(t * self.batch + b).copy_from_slice(self.at(b, t));
            }
        }
        m
    }

    fn from_step_major(m: &Matrix, batch: usize, steps: usize) -> Self {
        let features = m.cols();
        let mut data = vec![0.0; batch * steps * features];
        for t in 0..steps {
            for b in 0..batch {
                let start = (b * steps + t) * features;
                data[start..start + features].copy_from_slice(m.row(t * batch + b));
            }
        }
        Self {
            batch,
            steps,
            features,
            data,
        }
    }
}

/// A recurrent cell of the form `z = x·W + h·U + b`, where `z` has
/// `GATES · H` columns, followed by a row-wise nonlinearity.
pub trait RecurrentCell: ParamSet + Clone {
    /// Pre-activation blocks per hidden unit.
    const GATES: usize;
    /// Whether a cell state travels alongside the hidden output.
    const HAS_CELL_STATE: bool;

    fn zeros(input_dim: usize, hidden: usize) -> Self;
    fn input_weights(&self) -> &Matrix;
    fn recurrent_weights(&self) -> &Matrix;
    fn bias(&self) -> &[f64];
    fn parts_mut(&mut self) -> (&mut Matrix, &mut Matrix, &mut [f64]);

    fn input_dim(&self) -> usize {
        self.input_weights().rows()
    }

    fn hidden_dim(&self) -> usize {
        self.recurrent_weights().rows()
    }

    /// Activates one sequence's pre-activations `z` in place and writes the
    /// new hidden output `h`. Cell-state slices are empty for cells without
    /// one.
    fn activate_row(
        z: &mut [f64],
        c_prev: &[f64],
        c: &mut [f64],
        tanh_c: &mut [f64],
        h: &mut [f64],
    );

    /// Reverse of [`RecurrentCell::activate_row`]. `dc` holds the gradient
    /// with respect to the new cell state on entry and the previous cell
    /// state on exit. Writes the pre-activation gradient `dz`.
    fn backprop_row(
        z: &[f64],
        c_prev: &[f64],
        tanh_c: &[f64],
        dh: &[f64],
        dc: &mut [f64],
        dz: &mut [f64],
    );
}

struct LayerCache {
    /// Layer input, `T·B × d`.
    x: Matrix,
    /// Activated pre-activations, `T·B × G·H`.
    z: Matrix,
    /// Hidden outputs including the zero initial state, `(T+1)·B × H`.
    hs: Matrix,
    /// Cell states including the zero initial state, `(T+1)·B × H` (empty
    /// for cells without one).
    cs: Matrix,
    tanh_c: Matrix,
    /// Dropout on this layer's outputs: every step for inner layers, only the
    /// final step for the top layer.
    mask: DropoutMask,
}

/// Everything the backward pass needs from one forward pass.
pub struct SequenceCache<C: RecurrentCell> {
    layers: Vec<LayerCache>,
    batch: usize,
    steps: usize,
    _cell: std::marker::PhantomData<C>,
}

impl<C: RecurrentCell> SequenceCache<C> {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// Activated gate values of layer `l` at step `t` for sequence `b`.
    pub fn gates(&self, l: usize, t: usize, b: usize) -> &[f64] {
        self.layers[l].z.row(t * self.batch + b)
    }

    /// Hidden output (pre-dropout) of layer `l` after step `t` for sequence `b`.
    pub fn hidden(&self, l: usize, t: usize, b: usize) -> &[f64] {
        self.layers[l].hs.row((t + 1) * self.batch + b)
    }

    /// Cell state of layer `l` after step `t` for sequence `b` (empty for
    /// cells without one).
    pub fn cell_state(&self, l: usize, t: usize, b: usize) -> &[f64] {
        let cs = &self.layers[l].cs;
        if cs.rows() == 0 {
            &[]
        } else {
            cs.row((t + 1) * self.batch + b)
        }
    }
}

fn check_stack<C: RecurrentCell>(x: &SequenceBatch, layers: &[C]) -> Result<(), NnError> {
    let first = layers
        .first()
        .ok_or_else(|| NnError::ShapeMismatch("no recurrent layers".into()))?;
    if first.input_dim() != x.features() {
        return Err(NnError::ShapeMismatch(format!(
            "{} input features into a layer expecting {}",
            x.features(),
            first.input_dim()
        )));
    }
    for pair in layers.windows(2) {
        if pair[1].input_dim() != pair[0].hidden_dim() {
            return Err(NnError::ShapeMismatch(format!(
                "layer with {} hidden units feeds a layer expecting {} inputs",
                pair[0].hidden_dim(),
                pair[1].input_dim()
            )));
        }
    }
    if x.steps() == 0 || x.batch() == 0 {
        return Err(NnError::ShapeMismatch("empty sequence batch".into()));
    }
    Ok(())
}

fn layer_forward<C: RecurrentCell>(
    cell: &C,
    x: Matrix,
    batch: usize,
    steps: usize,
) -> Result<LayerCache, NnError> {
    let hd = cell.hidden_dim();
    let width = C::GATES * hd;
    let state_rows = if C::HAS_CELL_STATE {
        (steps + 1) * batch
    } else {
        0
    };

    let mut z = x.matmul(cell.input_weights())?;
    z.add_row_broadcast(cell.bias())?;
    let mut hs = Matrix::zeros((steps + 1) * batch, hd);
    let mut cs = Matrix::zeros(state_rows, hd);
    let mut tanh_c = Matrix::zeros(if C::HAS_CELL_STATE { steps * batch } else { 0 }, hd);

    let block = batch * hd;
    for t in 0..steps {
        let z_t = &mut z.as_mut_slice()[t * batch * width..(t + 1) * batch * width];
        let (h_done, h_rest) = hs.as_mut_slice().split_at_mut((t + 1) * block);
        let h_prev = &h_done[t * block..];
        let h_next = &mut h_rest[..block];
        gemm_slices(
            h_prev,
            (batch, hd),
            false,
            cell.recurrent_weights().as_slice(),
            (hd, width),
            false,
            z_t,
            (batch, width),
            1.0,
        )?;
        if C::HAS_CELL_STATE {
            let (c_done, c_rest) = cs.as_mut_slice().split_at_mut((t + 1) * block);
            let c_prev = &c_done[t * block..];
            let c_next = &mut c_rest[..block];
            let tc = &mut tanh_c.as_mut_slice()[t * block..(t + 1) * block];
            for b in 0..batch {
                let r = b * hd..(b + 1) * hd;
                C::activate_row(
                    &mut z_t[b * width..(b + 1) * width],
                    &c_prev[r.clone()],
                    &mut c_next[r.clone()],
                    &mut tc[r.clone()],
                    &mut h_next[r],
                );
            }
        } else {
            for b in 0..batch {
                let r = b * hd..(b + 1) * hd;
                C::activate_row(
                    &mut z_t[b * width..(b + 1) * width],
                    &[],
                    &mut [],
                    &mut [],
                    &mut h_next[r],
                );
            }
        }
    }

    Ok(LayerCache {
        x,
        z,
        hs,
        cs,
        tanh_c,
        mask: DropoutMask {
            keep: Matrix::zeros(0, 0),
            scale: 1.0,
        },
    })
}

fn block_matrix(m: &Matrix, start_row: usize, rows: usize) -> Matrix {
    let cols = m.cols();
    Matrix::from_vec(
        rows,
        cols,
        m.as_slice()[start_row * cols..(start_row + rows) * cols].to_vec(),
    )
    .expect("block within bounds")
}

/// Runs the stacked network over `x` and returns the final hidden state of the
/// top layer (`batch × hidden`), plus the caches for [`sequence_backward`].
pub fn sequence_forward<C: RecurrentCell>(
    x: &SequenceBatch,
    layers: &[C],
    dropout_rate: f64,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<(Matrix, SequenceCache<C>), NnError> {
    check_stack(x, layers)?;
    let (batch, steps) = (x.batch(), x.steps());
    let mut input = x.to_step_major();
    let mut caches = Vec::with_capacity(layers.len());
    let mut output = Matrix::zeros(0, 0);

    for (l, cell) in layers.iter().enumerate() {
        let mut cache = layer_forward(cell, input, batch, steps)?;
        let hd = cell.hidden_dim();
        if l + 1 == layers.len() {
            let last = block_matrix(&cache.hs, steps * batch, batch);
            let (dropped, mask) = dropout(&last, dropout_rate, mode, rng)?;
            cache.mask = mask;
            output = dropped;
            input = Matrix::zeros(0, 0);
        } else {
            let outs = block_matrix(&cache.hs, batch, steps * batch);
            let (dropped, mask) = dropout(&outs, dropout_rate, mode, rng)?;
            debug_assert_eq!(dropped.cols(), hd);
            cache.mask = mask;
            input = dropped;
        }
        caches.push(cache);
    }

    Ok((
        output,
        SequenceCache {
            layers: caches,
            batch,
            steps,
            _cell: std::marker::PhantomData,
        },
    ))
}

/// Backpropagation through time over every step and layer. `d_out` is the
/// gradient with respect to the forward output. Returns per-layer parameter
/// gradients and the gradient with respect to the input sequences.
pub fn sequence_backward<C: RecurrentCell>(
    layers: &[C],
    cache: &SequenceCache<C>,
    d_out: &Matrix,
) -> Result<(Vec<C>, SequenceBatch), NnError> {
    if cache.layers.len() != layers.len() || layers.is_empty() {
        return Err(NnError::CacheMismatch(format!(
            "{} cached layers for a {}-layer network",
            cache.layers.len(),
            layers.len()
        )));
    }
    let (batch, steps) = (cache.batch, cache.steps);
    for (cell, lc) in layers.iter().zip(&cache.layers) {
        if lc.x.shape() != (steps * batch, cell.input_dim())
            || lc.hs.shape() != ((steps + 1) * batch, cell.hidden_dim())
        {
            return Err(NnError::CacheMismatch(
                "cached activations do not fit the layer shapes".into(),
            ));
        }
    }
    let top = layers.len() - 1;
    let top_h = layers[top].hidden_dim();
    if d_out.shape() != (batch, top_h) {
        return Err(NnError::CacheMismatch(format!(
            "upstream gradient {:?}, expected ({batch}, {top_h})",
            d_out.shape()
        )));
    }

    // Gradient arriving at each step's pre-dropout hidden output from above.
    let mut d_h = Matrix::zeros(steps * batch, top_h);
    let d_last = dropout_backward(d_out, &cache.layers[top].mask)?;
    d_h.as_mut_slice()[(steps - 1) * batch * top_h..].copy_from_slice(d_last.as_slice());

    let mut grads: Vec<C> = layers
        .iter()
        .map(|c| C::zeros(c.input_dim(), c.hidden_dim()))
        .collect();
    let mut d_input = Matrix::zeros(0, 0);

    for l in (0..layers.len()).rev() {
        let cell = &layers[l];
        let lc = &cache.layers[l];
        let hd = cell.hidden_dim();
        let width = C::GATES * hd;
        let block = batch * hd;

        let mut dz = Matrix::zeros(steps * batch, width);
        let mut dh_rec = vec![0.0; block];
        let mut dh = vec![0.0; block];
        let mut dc = vec![0.0; if C::HAS_CELL_STATE { block } else { 0 }];
        for t in (0..steps).rev() {
            for ((v, e), r) in dh
                .iter_mut()
                .zip(&d_h.as_slice()[t * block..(t + 1) * block])
                .zip(&dh_rec)
            {
                *v = e + r;
            }
            let z_t = &lc.z.as_slice()[t * batch * width..(t + 1) * batch * width];
            let dz_t = &mut dz.as_mut_slice()[t * batch * width..(t + 1) * batch * width];
            for b in 0..batch {
                let r = b * hd..(b + 1) * hd;
                let zr = &z_t[b * width..(b + 1) * width];
                let dzr = &mut dz_t[b * width..(b + 1) * width];
                if C::HAS_CELL_STATE {
                    let c_prev = &lc.cs.as_slice()[t * block..(t + 1) * block];
                    let tc = &lc.tanh_c.as_slice()[t * block..(t + 1) * block];
                    C::backprop_row(
                        zr,
                        &c_prev[r.clone()],
                        &tc[r.clone()],
                        &dh[r.clone()],
                        &mut dc[r],
                        dzr,
                    );
                } else {
                    C::backprop_row(zr, &[], &[], &dh[r], &mut [], dzr);
                }
            }
            gemm_slices(
                dz_t,
                (batch, width),
                false,
                cell.recurrent_weights().as_slice(),
                (hd, width),
                true,
                &mut dh_rec,
                (batch, hd),
                0.0,
            )?;
        }

        let (gw, gu, gb) = grads[l].parts_mut();
        gemm(&lc.x, true, &dz, false, gw, 0.0)?;
        gemm_slices(
            &lc.hs.as_slice()[..steps * block],
            (steps * batch, hd),
            true,
            dz.as_slice(),
            dz.shape(),
            false,
            gu.as_mut_slice(),
            (hd, width),
            0.0,
        )?;
        gb.copy_from_slice(&dz.column_sums());

        let dx = dz.matmul_t(cell.input_weights())?;
        if l == 0 {
            d_input = dx;
        } else {
            d_h = dropout_backward(&dx, &cache.layers[l - 1].mask)?;
        }
    }
    Ok((
        grads,
        SequenceBatch::from_step_major(&d_input, batch, steps),
    ))
}

pub fn lstm_sequence_forward(
    x: &SequenceBatch,
    layers: &[LstmCellParams],
    dropout_rate: f64,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<(Matrix, SequenceCache<LstmCellParams>), NnError> {
    sequence_forward(x, layers, dropout_rate, mode, rng)
}

pub fn lstm_backward(
    layers: &[LstmCellParams],
    cache: &SequenceCache<LstmCellParams>,
    d_out: &Matrix,
) -> Result<(Vec<LstmCellParams>, SequenceBatch), NnError> {
    sequence_backward(layers, cache, d_out)
}

pub fn rnn_sequence_forward(
    x: &SequenceBatch,
    layers: &[RnnCellParams],
    dropout_rate: f64,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<(Matrix, SequenceCache<RnnCellParams>), NnError> {
    sequence_forward(x, layers, dropout_rate, mode, rng)
}

pub fn rnn_backward(
    layers: &[RnnCellParams],
    cache: &SequenceCache<RnnCellParams>,
    d_out: &Matrix,
) -> Result<(Vec<RnnCellParams>, SequenceBatch), NnError> {
    sequence_backward(layers, cache, d_out)
}
