use serde::{Deserialize, Serialize};

use super::{Matrix, NnError, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

/// Keep-mask of an inverted-dropout application: entries are 1.0 (kept) or
/// 0.0 (dropped). Survivors were scaled by `scale = 1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep: Matrix,
    pub scale: f64,
}

/// Inverted dropout. In [`Mode::Infer`] the input passes through unchanged and
/// the mask is all ones; no random numbers are consumed.
pub fn dropout(
    x: &Matrix,
    rate: f64,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<(Matrix, DropoutMask), NnError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::InvalidRate(rate));
    }
    let ones = || Matrix::from_vec(x.rows(), x.cols(), vec![1.0; x.rows() * x.cols()]);
    if mode == Mode::Infer || rate == 0.0 {
        return Ok((
            x.clone(),
            DropoutMask {
                keep: ones()?,
                scale: 1.0,
            },
        ));
    }
    let scale = 1.0 / (1.0 - rate);
    let mut keep = Matrix::zeros(x.rows(), x.cols());
    let mut out = Matrix::zeros(x.rows(), x.cols());
    for ((k, o), &v) in keep
        .as_mut_slice()
        .iter_mut()
        .zip(out.as_mut_slice())
        .zip(x.as_slice())
    {
        if rng.uniform() >= rate {
            *k = 1.0;
            *o = v * scale;
        }
    }
    Ok((out, DropoutMask { keep, scale }))
}

pub fn dropout_backward(grad: &Matrix, mask: &DropoutMask) -> Result<Matrix, NnError> {
    let mut g = grad.hadamard(&mask.keep)?;
    if mask.scale != 1.0 {
        for v in g.as_mut_slice() {
            *v *= mask.scale;
        }
    }
    Ok(g)
}
