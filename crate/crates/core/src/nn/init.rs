use serde::{Deserialize, Serialize};

use super::{Matrix, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    GlorotUniform,
    Zeros,
}

/// Weight matrix of shape `fan_in × fan_out`. Glorot draws come from
/// `U(-L, L)` with `L = sqrt(6 / (fan_in + fan_out))`, in row-major order.
/// Biases are never drawn; callers allocate them as zeros.
pub fn init_matrix(
    fan_in: usize,
    fan_out: usize,
    scheme: InitScheme,
    rng: &mut RngStream,
) -> Matrix {
    let mut m = Matrix::zeros(fan_in, fan_out);
    if scheme == InitScheme::GlorotUniform {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in m.as_mut_slice() {
            *v = rng.uniform_in(-limit, limit);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeros_scheme() {
        let m = init_matrix(4, 3, InitScheme::Zeros, &mut RngStream::new(1));
        assert!(m.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn glorot_bound_respected() {
        let limit = (6.0f64 / 150.0).sqrt();
        assert!((limit - 0.2).abs() < 1e-12);
        let m = init_matrix(100, 50, InitScheme::GlorotUniform, &mut RngStream::new(8));
        let max = m.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(max <= limit);
        // A 5000-draw sample from U(-0.2, 0.2) should come close to the bound.
        assert!(max > 0.19);
    }

    #[test]
    fn same_seed_bitwise_identical() {
        let a = init_matrix(7, 5, InitScheme::GlorotUniform, &mut RngStream::new(11));
        let b = init_matrix(7, 5, InitScheme::GlorotUniform, &mut RngStream::new(11));
        let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
