use super::NnError;

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>), NnError> {
    if pred.len() != target.len() {
        return Err(NnError::LengthMismatch(pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(NnError::EmptyInput);
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit() {
        let (l, g) = mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn unit_error() {
        let (l, g) = mse_loss(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g, vec![-1.0, -1.0]);
    }

    #[test]
    fn hand_summed_case() {
        // (1 + 4 + 9) / 3
        let (l, _) = mse_loss(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert!((l - 14.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert_eq!(
            mse_loss(&[1.0], &[1.0, 2.0]).unwrap_err(),
            NnError::LengthMismatch(1, 2)
        );
        assert_eq!(mse_loss(&[], &[]).unwrap_err(), NnError::EmptyInput);
    }
}
