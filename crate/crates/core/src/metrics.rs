//! Point-forecast error metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} actual vs {1} predicted")]
    LengthMismatch(usize, usize),
    #[error("no observations")]
    EmptyInput,
    #[error("R² is undefined for a constant target")]
    ZeroVariance,
}

fn check(y: &[f64], yhat: &[f64]) -> Result<(), MetricsError> {
    if y.len() != yhat.len() {
        return Err(MetricsError::LengthMismatch(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

fn sum_sq_err(y: &[f64], yhat: &[f64]) -> f64 {
    y.iter().zip(yhat).map(|(a, p)| (a - p) * (a - p)).sum()
}

/// `1 − SS_res / SS_tot`. Negative when worse than predicting the mean.
pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64, MetricsError> {
    check(y, yhat)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if ss_tot == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok(1.0 - sum_sq_err(y, yhat) / ss_tot)
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64, MetricsError> {
    check(y, yhat)?;
    Ok(y.iter().zip(yhat).map(|(a, p)| (a - p).abs()).sum::<f64>() / y.len() as f64)
}

pub fn mse(y: &[f64], yhat: &[f64]) -> Result<f64, MetricsError> {
    check(y, yhat)?;
    Ok(sum_sq_err(y, yhat) / y.len() as f64)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64, MetricsError> {
    mse(y, yhat).map(f64::sqrt)
}

/// Units the metrics were computed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueSpace {
    #[default]
    Price,
    Scaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub r2: f64,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub n: usize,
    pub space: ValueSpace,
}

impl MetricsReport {
    pub fn compute(y: &[f64], yhat: &[f64], space: ValueSpace) -> Result<Self, MetricsError> {
        let mse = mse(y, yhat)?;
        Ok(Self {
            r2: r2(y, yhat)?,
            mae: mae(y, yhat)?,
            mse,
            rmse: mse.sqrt(),
            n: y.len(),
            space,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reversed_prediction_r2() {
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -3.0);
        assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
    }

    #[test]
    fn mae_and_mse_examples() {
        assert_eq!(mae(&[0.0, 0.0], &[3.0, -4.0]).unwrap(), 3.5);
        assert_eq!(mse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5);
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
    }

    #[test]
    fn errors() {
        assert_eq!(
            r2(&[2.0, 2.0], &[1.0, 2.0]),
            Err(MetricsError::ZeroVariance)
        );
        assert_eq!(mae(&[], &[]), Err(MetricsError::EmptyInput));
        assert_eq!(
            mse(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch(1, 2))
        );
    }

    #[test]
    fn report_is_consistent() {
        let r =
            MetricsReport::compute(&[1.0, 2.0, 4.0], &[1.5, 2.0, 3.0], ValueSpace::Price).unwrap();
        assert_eq!(r.rmse, r.mse.sqrt());
        assert_eq!(r.n, 3);
    }
}
