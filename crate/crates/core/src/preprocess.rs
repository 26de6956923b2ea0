//! Scaling, sliding windows and walk-forward splits.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Matrix;

pub const DEFAULT_WINDOW: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("no values to fit")]
    EmptyInput,
    #[error("min-max scaling of a constant series")]
    DegenerateRange,
    #[error("standard scaling of a zero-variance series")]
    ZeroVariance,
    #[error("series of length {len} is too short for window {window}")]
    SeriesTooShort { len: usize, window: usize },
    #[error("window length must be at least 1")]
    ZeroWindow,
    #[error("time series split needs at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{n} samples cannot form {k} folds (need at least {needed})")]
    TooFewSamples { n: usize, k: usize, needed: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    #[default]
    MinMax,
    Standard,
}

/// Affine map `x ↦ (x − shift) / scale`. Min-max uses `(min, max − min)`,
/// standard uses `(mean, population std)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub kind: ScalerKind,
    pub shift: f64,
    pub scale: f64,
}

impl ScalerParams {
    /// The map that leaves values unchanged.
    pub fn identity() -> Self {
        Self {
            kind: ScalerKind::Standard,
            shift: 0.0,
            scale: 1.0,
        }
    }

    #[inline]
    pub fn forward(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }

    #[inline]
    pub fn inverse(&self, z: f64) -> f64 {
        z * self.scale + self.shift
    }
}

pub fn fit_scaler(data: &[f64], kind: ScalerKind) -> Result<ScalerParams, PreprocessError> {
    if data.is_empty() {
        return Err(PreprocessError::EmptyInput);
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(PreprocessError::NonFinite(i));
    }
    let (shift, scale) = match kind {
        ScalerKind::MinMax => {
            let min = data.iter().copied().fold(f64::INFINITY, f64::min);
            let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max - min <= 0.0 {
                return Err(PreprocessError::DegenerateRange);
            }
            (min, max - min)
        }
        ScalerKind::Standard => {
            let n = data.len() as f64;
            let mean = data.iter().sum::<f64>() / n;
            let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if std <= 0.0 {
                return Err(PreprocessError::ZeroVariance);
            }
            (mean, std)
        }
    };
    Ok(ScalerParams { kind, shift, scale })
}

/// Scales without clipping; values outside the fitted range map outside
/// `[0, 1]` for min-max.
pub fn apply_scaler(params: &ScalerParams, data: &[f64]) -> Vec<f64> {
    data.iter().map(|&x| params.forward(x)).collect()
}

pub fn invert_scaler(params: &ScalerParams, data: &[f64]) -> Vec<f64> {
    data.iter().map(|&z| params.inverse(z)).collect()
}

/// Supervised samples from a sliding window. Row `i` of `inputs` is
/// `s[o+i .. o+i+T)` and `targets[i]` is `s[o+i+T]`, where `o` is
/// `origin` (the series index of the first window start).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Matrix,
    pub targets: Vec<f64>,
    origin: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn window(&self) -> usize {
        self.inputs.cols()
    }

    /// Series index of the first window start.
    pub fn origin(&self) -> usize {
        self.origin
    }

    /// Series index predicted by sample `i`.
    pub fn target_index(&self, i: usize) -> usize {
        self.origin + i + self.window()
    }

    /// Samples `range`, keeping track of their position in the series.
    pub fn subset(&self, range: std::ops::Range<usize>) -> WindowedDataset {
        let idx: Vec<usize> = range.clone().collect();
        WindowedDataset {
            inputs: self.inputs.select_rows(&idx),
            targets: self.targets[range.clone()].to_vec(),
            origin: self.origin + range.start,
        }
    }

    /// Builds a dataset from explicit rows; `origin` is informational.
    pub fn from_parts(
        inputs: Matrix,
        targets: Vec<f64>,
        origin: usize,
    ) -> Result<Self, PreprocessError> {
        if inputs.rows() != targets.len() {
            return Err(PreprocessError::SeriesTooShort {
                len: targets.len(),
                window: inputs.rows(),
            });
        }
        Ok(Self {
            inputs,
            targets,
            origin,
        })
    }
}

pub fn make_windows(series: &[f64], window: usize) -> Result<WindowedDataset, PreprocessError> {
    if window == 0 {
        return Err(PreprocessError::ZeroWindow);
    }
    if series.len() <= window {
        return Err(PreprocessError::SeriesTooShort {
            len: series.len(),
            window,
        });
    }
    let n = series.len() - window;
    let mut data = Vec::with_capacity(n * window);
    for i in 0..n {
        data.extend_from_slice(&series[i..i + window]);
    }
    Ok(WindowedDataset {
        inputs: Matrix::from_vec(n, window, data).expect("window buffer has n·T entries"),
        targets: series[window..].to_vec(),
        origin: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldIndices {
    pub train: std::ops::Range<usize>,
    pub test: std::ops::Range<usize>,
}

/// Expanding-window walk-forward split of `n` samples into `k` folds. With
/// `s = ⌊n / (k+1)⌋`, fold `j` (1-based) tests on
/// `[n − (k−j+1)s, n − (k−j)s)` and trains on everything before it. Any
/// remainder `n mod (k+1)` lands at the front of every training range.
pub fn time_series_split(n: usize, k: usize) -> Result<Vec<FoldIndices>, PreprocessError> {
    if k < 2 {
        return Err(PreprocessError::TooFewFolds(k));
    }
    let needed = 2 * (k + 1);
    if n < needed {
        return Err(PreprocessError::TooFewSamples { n, k, needed });
    }
    let s = n / (k + 1);
    Ok((1..=k)
        .map(|j| {
            let start = n - (k - j + 1) * s;
            FoldIndices {
                train: 0..start,
                test: start..start + s,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minmax_maps_range_to_unit_interval() {
        let p = fit_scaler(&[2.0, 4.0, 6.0], ScalerKind::MinMax).unwrap();
        assert_eq!(
            apply_scaler(&p, &[2.0, 4.0, 6.0, 8.0]),
            vec![0.0, 0.5, 1.0, 1.5]
        );
    }

    #[test]
    fn standard_uses_population_std() {
        // mean 5, population variance 4.
        let p = fit_scaler(
            &[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0],
            ScalerKind::Standard,
        )
        .unwrap();
        assert_eq!((p.shift, p.scale), (5.0, 2.0));
    }

    #[test]
    fn degenerate_inputs() {
        assert_eq!(
            fit_scaler(&[], ScalerKind::MinMax),
            Err(PreprocessError::EmptyInput)
        );
        assert_eq!(
            fit_scaler(&[3.0; 4], ScalerKind::MinMax),
            Err(PreprocessError::DegenerateRange)
        );
        assert_eq!(
            fit_scaler(&[3.0; 4], ScalerKind::Standard),
            Err(PreprocessError::ZeroVariance)
        );
        assert_eq!(
            fit_scaler(&[1.0, f64::NAN], ScalerKind::MinMax),
            Err(PreprocessError::NonFinite(1))
        );
    }

    #[test]
    fn identity_scaler_is_a_no_op() {
        let id = ScalerParams::identity();
        assert_eq!(apply_scaler(&id, &[1.5, -2.0]), vec![1.5, -2.0]);
        assert_eq!(invert_scaler(&id, &[1.5, -2.0]), vec![1.5, -2.0]);
    }

    #[test]
    fn windows_of_a_short_series() {
        let d = make_windows(&[1.0, 2.0, 3.0, 4.0, 5.0], 3).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.inputs.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(d.inputs.row(1), &[2.0, 3.0, 4.0]);
        assert_eq!(d.targets, vec![4.0, 5.0]);
        assert_eq!(d.target_index(1), 4);

        let sub = d.subset(1..2);
        assert_eq!(sub.origin(), 1);
        assert_eq!(sub.target_index(0), 4);
        assert_eq!(sub.inputs.row(0), &[2.0, 3.0, 4.0]);
    }

    #[test]
    fn windows_need_more_than_t_points() {
        assert_eq!(
            make_windows(&[1.0; 3], 3),
            Err(PreprocessError::SeriesTooShort { len: 3, window: 3 })
        );
        assert_eq!(make_windows(&[1.0; 3], 0), Err(PreprocessError::ZeroWindow));
    }

    #[test]
    fn split_of_twelve_into_three() {
        let folds = time_series_split(12, 3).unwrap();
        let got: Vec<_> = folds
            .iter()
            .map(|f| (f.train.clone(), f.test.clone()))
            .collect();
        assert_eq!(got, vec![(0..3, 3..6), (0..6, 6..9), (0..9, 9..12)]);
    }

    #[test]
    fn split_with_remainder() {
        let folds = time_series_split(100, 5).unwrap();
        assert_eq!(folds[0].test, 20..36);
        assert_eq!(folds[4].test, 84..100);
        assert_eq!(folds[4].train, 0..84);
    }

    #[test]
    fn split_errors() {
        assert_eq!(
            time_series_split(100, 1),
            Err(PreprocessError::TooFewFolds(1))
        );
        assert_eq!(
            time_series_split(7, 3),
            Err(PreprocessError::TooFewSamples {
                n: 7,
                k: 3,
                needed: 8
            })
        );
        assert!(time_series_split(8, 3).is_ok());
    }
}
