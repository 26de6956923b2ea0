//! Stacked generalisation with a least-squares meta-model:
//! `ŷ = β₀ + β₁·ŷ_lstm + β₂·ŷ_ann`.

use std::io::{Read, Write};
use std::ops::Range;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{predict, read_container, write_container, ForecastModel, ModelError};
use crate::nn::Matrix;
use crate::preprocess::{invert_scaler, WindowedDataset};

pub const STACK_FORMAT: &str = "stackcast-stack";

/// Relative pivot size below which the normal equations count as singular.
pub const PIVOT_TOLERANCE: f64 = 1e-10;
pub const RIDGE_JITTER: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("{n} samples cannot determine {p} coefficients")]
    TooFewSamples { n: usize, p: usize },
    #[error("design matrix has {rows} rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("normal equations are singular even after ridge jitter")]
    Singular,
    #[error("meta-fit targets {meta:?} overlap base training targets {base:?}")]
    LeakageDetected {
        base: Range<usize>,
        meta: Range<usize>,
    },
    #[error("base models disagree on {0}")]
    IncompatibleBases(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    /// True when the ridge fallback was used.
    pub ridge: bool,
}

/// Solves `A x = b` in place by Gaussian elimination with partial pivoting.
/// Fails when a pivot falls below `PIVOT_TOLERANCE` times the largest
/// diagonal magnitude of `A`.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let p = b.len();
    let scale = (0..p).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    for col in 0..p {
        let pivot_row = (col..p)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot_row][col].abs() < PIVOT_TOLERANCE * scale {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for r in col + 1..p {
            let f = a[r][col] / a[col][col];
            for c in col..p {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; p];
    for r in (0..p).rev() {
        let s: f64 = (r + 1..p).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Ordinary least squares via the normal equations `XᵀX β = Xᵀy`. `design`
/// must already contain the intercept column. A numerically singular `XᵀX`
/// is retried with `RIDGE_JITTER` added to its diagonal.
pub fn fit_ols(design: &Matrix, y: &[f64]) -> Result<OlsFit, EnsembleError> {
    let (n, p) = design.shape();
    if n != y.len() {
        return Err(EnsembleError::LengthMismatch {
            rows: n,
            targets: y.len(),
        });
    }
    if n < p || p == 0 {
        return Err(EnsembleError::TooFewSamples { n, p });
    }
    let xtx = design.t_matmul(design).expect("XᵀX shapes agree");
    let xty = design
        .t_matmul(&Matrix::column(y))
        .expect("Xᵀy shapes agree");
    let rows: Vec<Vec<f64>> = (0..p).map(|i| xtx.row(i).to_vec()).collect();
    let rhs = xty.into_vec();

    if let Some(beta) = solve(rows.clone(), rhs.clone()) {
        return Ok(OlsFit {
            coefficients: beta,
            ridge: false,
        });
    }
    let mut jittered = rows;
    for (i, row) in jittered.iter_mut().enumerate() {
        row[i] += RIDGE_JITTER;
    }
    warn!("normal equations singular, refitting with ridge {RIDGE_JITTER:e}");
    solve(jittered, rhs)
        .map(|beta| OlsFit {
            coefficients: beta,
            ridge: true,
        })
        .ok_or(EnsembleError::Singular)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackingCoefficients {
    pub intercept: f64,
    pub lstm: f64,
    pub ann: f64,
}

impl StackingCoefficients {
    pub fn combine(&self, lstm: f64, ann: f64) -> f64 {
        self.intercept + self.lstm * lstm + self.ann * ann
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFitReport {
    pub residuals: Vec<f64>,
    pub meta_mse: f64,
    pub lstm_mse: f64,
    pub ann_mse: f64,
    pub n: usize,
    pub ridge: bool,
    /// Series indices of the meta-fit targets.
    pub fitted_on: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackedModel {
    pub base_lstm: ForecastModel,
    pub base_ann: ForecastModel,
    pub coefficients: StackingCoefficients,
    pub report: MetaFitReport,
}

fn overlaps(a: &Range<usize>, b: &Range<usize>) -> bool {
    a.start < b.end && b.start < a.end
}

fn mse(p: &[f64], y: &[f64]) -> f64 {
    p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// Fits the meta-model on base predictions over `meta_data`, whose targets
/// must not overlap either base's training targets.
pub fn fit_stacking(
    base_lstm: ForecastModel,
    base_ann: ForecastModel,
    meta_data: &WindowedDataset,
) -> Result<StackedModel, EnsembleError> {
    if base_lstm.window != base_ann.window {
        return Err(EnsembleError::IncompatibleBases("window length"));
    }
    if base_lstm.scaler != base_ann.scaler {
        return Err(EnsembleError::IncompatibleBases("scaler"));
    }
    let n = meta_data.len();
    if n < 3 {
        return Err(EnsembleError::TooFewSamples { n, p: 3 });
    }
    let meta = meta_data.target_index(0)..meta_data.target_index(n - 1) + 1;
    for base in [&base_lstm, &base_ann] {
        if let Some(trained) = &base.trained_on {
            if overlaps(trained, &meta) {
                return Err(EnsembleError::LeakageDetected {
                    base: trained.clone(),
                    meta,
                });
            }
        }
    }

    let p_lstm = predict(&base_lstm, &meta_data.inputs)?;
    let p_ann = predict(&base_ann, &meta_data.inputs)?;
    let design = design_matrix(&p_lstm, &p_ann);
    let fit = fit_ols(&design, &meta_data.targets)?;
    let coefficients = StackingCoefficients {
        intercept: fit.coefficients[0],
        lstm: fit.coefficients[1],
        ann: fit.coefficients[2],
    };
    let residuals: Vec<f64> = (0..n)
        .map(|i| meta_data.targets[i] - coefficients.combine(p_lstm[i], p_ann[i]))
        .collect();
    let report = MetaFitReport {
        meta_mse: residuals.iter().map(|e| e * e).sum::<f64>() / n as f64,
        lstm_mse: mse(&p_lstm, &meta_data.targets),
        ann_mse: mse(&p_ann, &meta_data.targets),
        residuals,
        n,
        ridge: fit.ridge,
        fitted_on: meta,
    };
    Ok(StackedModel {
        base_lstm,
        base_ann,
        coefficients,
        report,
    })
}

/// Rows `[1, ŷ_lstm, ŷ_ann]`.
pub fn design_matrix(p_lstm: &[f64], p_ann: &[f64]) -> Matrix {
    let data = p_lstm
        .iter()
        .zip(p_ann)
        .flat_map(|(&a, &b)| [1.0, a, b])
        .collect();
    Matrix::from_vec(p_lstm.len(), 3, data).expect("three columns per row")
}

/// Scaled-space ensemble forecast for each window.
pub fn predict_stacked(model: &StackedModel, inputs: &Matrix) -> Result<Vec<f64>, EnsembleError> {
    let p_lstm = predict(&model.base_lstm, inputs)?;
    let p_ann = predict(&model.base_ann, inputs)?;
    Ok(p_lstm
        .iter()
        .zip(&p_ann)
        .map(|(&a, &b)| model.coefficients.combine(a, b))
        .collect())
}

pub fn predict_stacked_prices(
    model: &StackedModel,
    inputs: &Matrix,
) -> Result<Vec<f64>, EnsembleError> {
    Ok(invert_scaler(
        &model.base_lstm.scaler,
        &predict_stacked(model, inputs)?,
    ))
}

pub fn save_stacked<W: Write>(model: &StackedModel, out: W) -> Result<(), EnsembleError> {
    Ok(write_container(STACK_FORMAT, model, out)?)
}

pub fn load_stacked<R: Read>(input: R) -> Result<StackedModel, EnsembleError> {
    Ok(read_container(STACK_FORMAT, input)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fit_naive;
    use crate::preprocess::{make_windows, ScalerParams};

    fn design(cols: &[&[f64]]) -> Matrix {
        let n = cols[0].len();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                std::iter::once(1.0)
                    .chain(cols.iter().map(|c| c[i]))
                    .collect()
            })
            .collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn recovers_exact_three_point_solution() {
        let p1 = [1.0, 2.0, 3.0];
        let p2 = [0.0, 1.0, 0.0];
        let y: Vec<f64> = (0..3).map(|i| 2.0 + 3.0 * p1[i] + 0.5 * p2[i]).collect();
        let fit = fit_ols(&design(&[&p1, &p2]), &y).unwrap();
        assert!(!fit.ridge);
        for (b, e) in fit.coefficients.iter().zip([2.0, 3.0, 0.5]) {
            assert!((b - e).abs() < 1e-9, "{:?}", fit.coefficients);
        }
    }

    #[test]
    fn collinear_inputs_take_the_ridge_path() {
        let p1 = [1.0, 2.0, 3.0, 4.0];
        let p2 = [2.0, 4.0, 6.0, 8.0];
        let fit = fit_ols(&design(&[&p1, &p2]), &[1.0, 2.0, 2.5, 4.5]).unwrap();
        assert!(fit.ridge);
        assert!(fit.coefficients.iter().all(|b| b.is_finite()));
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(
            fit_ols(&design(&[&[1.0, 2.0], &[3.0, 1.0]]), &[1.0, 2.0]),
            Err(EnsembleError::TooFewSamples { n: 2, p: 3 })
        ));
    }

    #[test]
    fn combine_substitutes_coefficients() {
        let c = StackingCoefficients {
            intercept: 1.0,
            lstm: 0.5,
            ann: 0.5,
        };
        assert_eq!(c.combine(10.0, 12.0), 12.0);
    }

    #[test]
    fn leakage_is_rejected() {
        let series: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let d = make_windows(&series, 3).unwrap();
        let mut base = fit_naive(3, ScalerParams::identity());
        base.trained_on = Some(3..12);
        let meta = d.subset(8..d.len());
        assert!(matches!(
            fit_stacking(base.clone(), base.clone(), &meta),
            Err(EnsembleError::LeakageDetected { .. })
        ));
        assert!(fit_stacking(base.clone(), base, &d.subset(9..d.len())).is_ok());
    }
}
