use super::NnError;

/// Compares an analytic gradient against central finite differences.
///
/// `eval` maps a flat parameter vector to `(loss, analytic gradient)`. For each
/// coordinate the numeric derivative is `(f(θ+ε) − f(θ−ε)) / 2ε`; the result is
/// the maximum over coordinates of `|a − n| / max(|a|, |n|, 1e-8)`.
///
/// `eval` must be deterministic: it is called twice at `params` and the two
/// losses must agree bitwise.
pub fn grad_check<F>(eval: F, params: &[f64], epsilon: f64) -> Result<f64, NnError>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (loss_a, analytic) = eval(params);
    let (loss_b, _) = eval(params);
    if loss_a.to_bits() != loss_b.to_bits() {
        return Err(NnError::NonDeterministicLoss(loss_a, loss_b));
    }
    if analytic.len() != params.len() {
        return Err(NnError::LengthMismatch(analytic.len(), params.len()));
    }

    let mut theta = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + epsilon;
        let (plus, _) = eval(&theta);
        theta[i] = orig - epsilon;
        let (minus, _) = eval(&theta);
        theta[i] = orig;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn quadratic_is_exact() {
        let err = grad_check(|p| (p[0] * p[0], vec![2.0 * p[0]]), &[3.0], 1e-5).unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let err = grad_check(|p| (p[0] * p[0], vec![p[0]]), &[3.0], 1e-5).unwrap();
        assert!(err > 0.4);
    }

    #[test]
    fn rejects_nondeterministic_loss() {
        let calls = Cell::new(0.0);
        let res = grad_check(
            |_| {
                calls.set(calls.get() + 1.0);
                (calls.get(), vec![0.0])
            },
            &[0.0],
            1e-5,
        );
        assert!(matches!(res, Err(NnError::NonDeterministicLoss(_, _))));
    }
}
