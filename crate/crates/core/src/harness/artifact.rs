//! Saved models of either container format.

use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use super::{HarnessError, ModelPredictions};
use crate::ensemble::{
    load_stacked, predict_stacked_prices, save_stacked, StackedModel, STACK_FORMAT,
};
use crate::market_data::{Field, PriceSeries};
use crate::models::{load_model, predict_prices, save_model, ForecastModel, MODEL_FORMAT};
use crate::preprocess::{apply_scaler, make_windows, PreprocessError, ScalerParams};

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Single(ForecastModel),
    Stacked(Box<StackedModel>),
}

#[derive(Deserialize)]
struct Header {
    format: String,
}

impl Artifact {
    pub fn window(&self) -> usize {
        match self {
            Artifact::Single(m) => m.window,
            Artifact::Stacked(s) => s.base_lstm.window,
        }
    }

    pub fn scaler(&self) -> &ScalerParams {
        match self {
            Artifact::Single(m) => &m.scaler,
            Artifact::Stacked(s) => &s.base_lstm.scaler,
        }
    }

    /// `naive`, `ann`, `lstm`, `rnn` or `stack`.
    pub fn name(&self) -> &'static str {
        match self {
            Artifact::Single(m) => m.kind().name(),
            Artifact::Stacked(_) => "stack",
        }
    }

    pub fn write<W: Write>(&self, out: W) -> Result<(), String> {
        match self {
            Artifact::Single(m) => save_model(m, out).map_err(|e| e.to_string()),
            Artifact::Stacked(s) => save_stacked(s, out).map_err(|e| e.to_string()),
        }
    }

    /// Parses a container, dispatching on its `format` field.
    pub fn from_slice(bytes: &[u8]) -> Result<Self, HarnessError> {
        let bad = |m: String| HarnessError::InvalidModel(m);
        let header: Header = serde_json::from_slice(bytes).map_err(|e| bad(e.to_string()))?;
        match header.format.as_str() {
            MODEL_FORMAT => load_model(bytes)
                .map(Artifact::Single)
                .map_err(|e| bad(e.to_string())),
            STACK_FORMAT => load_stacked(bytes)
                .map(|s| Artifact::Stacked(Box::new(s)))
                .map_err(|e| bad(e.to_string())),
            other => Err(bad(format!("unknown model format `{other}`"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let bytes = std::fs::read(path).map_err(|e| HarnessError::unreadable(path, e))?;
        Self::from_slice(&bytes)
    }

    /// Price-space forecasts for every target the series supports, that is
    /// every index from `window` on.
    pub fn forecast(
        &self,
        series: &PriceSeries,
        field: Field,
    ) -> Result<ModelPredictions, HarnessError> {
        let t = self.window();
        let values = series.field(field);
        if values.len() <= t {
            return Err(HarnessError::Preprocess {
                stage: "windowing",
                source: PreprocessError::SeriesTooShort {
                    len: values.len(),
                    window: t,
                },
            });
        }
        let windows = make_windows(&apply_scaler(self.scaler(), values), t).map_err(|source| {
            HarnessError::Preprocess {
                stage: "windowing",
                source,
            }
        })?;
        let predicted = match self {
            Artifact::Single(m) => {
                predict_prices(m, &windows.inputs).map_err(|source| HarnessError::Model {
                    stage: "predicting",
                    source,
                })?
            }
            Artifact::Stacked(s) => {
                predict_stacked_prices(s, &windows.inputs).map_err(|source| {
                    HarnessError::Ensemble {
                        stage: "predicting",
                        source,
                    }
                })?
            }
        };
        Ok(ModelPredictions {
            model: self.name().to_string(),
            dates: series.dates()[t..].to_vec(),
            actual: values[t..].to_vec(),
            predicted,
        })
    }
}
