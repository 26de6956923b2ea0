//! Trainable forecasters over windowed datasets.
//!
//! Every model works in scaled space. The scaler used to prepare its training
//! data is stored alongside the weights so that [`predict_prices`] can map
//! outputs back to price units without outside context.

mod network;

use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use network::{AnnNet, Network, RecurrentNet};

use crate::nn::{adam_step, AdamConfig, AdamState, Matrix, Mode, NnError, RngStream};
use crate::preprocess::{invert_scaler, ScalerParams, WindowedDataset};
use crate::recurrent::{LstmCellParams, RnnCellParams};

pub const MODEL_FORMAT: &str = "stackcast-model";
pub const MODEL_VERSION: u32 = 1;

pub const LSTM_LAYERS: usize = 2;
pub const RNN_LAYERS: usize = 1;
pub const DEFAULT_HIDDEN: usize = 100;

// Sub-streams of the training seed.
const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("windows of length {found} given to a model with window {expected}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("unsupported model file: {0}")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("model file: {0}")]
    Serde(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Naive,
    Ann,
    Lstm,
    Rnn,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Naive => "naive",
            ModelKind::Ann => "ann",
            ModelKind::Lstm => "lstm",
            ModelKind::Rnn => "rnn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            ModelKind::Naive,
            ModelKind::Ann,
            ModelKind::Lstm,
            ModelKind::Rnn,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown model kind `{s}`"))
    }
}

/// Optimisation settings. None of these values come from a published
/// configuration; they are conventional starting points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Applied to recurrent layer outputs. The ANN has no dropout.
    pub dropout_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Recurrent width override; `None` means [`DEFAULT_HIDDEN`].
    pub hidden_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            dropout_rate: 0.2,
            seed: 0,
            shuffle: true,
            hidden_size: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.hidden_size == Some(0) {
            return bad("hidden_size must be at least 1".into());
        }
        Ok(())
    }

    fn hidden(&self) -> usize {
        self.hidden_size.unwrap_or(DEFAULT_HIDDEN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Sample-weighted mean of the train-mode mini-batch losses, per epoch.
    pub epoch_losses: Vec<f64>,
    /// Inference-mode MSE over the full training set after the last epoch.
    pub final_loss: f64,
    pub wall_time_secs: f64,
    pub config: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum ModelParams {
    Naive,
    Ann(AnnNet),
    Lstm(RecurrentNet<LstmCellParams>),
    Rnn(RecurrentNet<RnnCellParams>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub window: usize,
    pub scaler: ScalerParams,
    /// Series indices of the targets the model was trained on.
    pub trained_on: Option<Range<usize>>,
    pub params: ModelParams,
}

impl ForecastModel {
    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Naive => ModelKind::Naive,
            ModelParams::Ann(_) => ModelKind::Ann,
            ModelParams::Lstm(_) => ModelKind::Lstm,
            ModelParams::Rnn(_) => ModelKind::Rnn,
        }
    }
}

fn train_network<N: Network>(
    mut net: N,
    data: &WindowedDataset,
    cfg: &TrainConfig,
) -> Result<(N, FitReport), ModelError> {
    let start = Instant::now();
    let mut adam = AdamState::new(
        &net,
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
    );
    let mut shuffle_rng = RngStream::derive(cfg.seed, STREAM_SHUFFLE);
    let mut dropout_rng = RngStream::derive(cfg.seed, STREAM_DROPOUT);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            shuffle_rng.shuffle(&mut order);
        }
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let x = data.inputs.select_rows(batch);
            let y: Vec<f64> = batch.iter().map(|&i| data.targets[i]).collect();
            let (loss, grads) = net.loss_and_grad(&x, &y, Mode::Train, &mut dropout_rng)?;
            adam_step(&mut net, &grads, &mut adam)?;
            total += loss * batch.len() as f64;
        }
        let mean = total / data.len() as f64;
        debug!("epoch {}/{}: loss {mean:.6e}", epoch + 1, cfg.epochs);
        epoch_losses.push(mean);
    }

    let fitted = net.forward(&data.inputs, Mode::Infer, &mut dropout_rng)?;
    let final_loss = fitted
        .iter()
        .zip(&data.targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / data.len() as f64;
    Ok((
        net,
        FitReport {
            epoch_losses,
            final_loss,
            wall_time_secs: start.elapsed().as_secs_f64(),
            config: cfg.clone(),
        },
    ))
}

fn check_training_input(data: &WindowedDataset, cfg: &TrainConfig) -> Result<(), ModelError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    Ok(())
}

fn trained_range(data: &WindowedDataset) -> Option<Range<usize>> {
    Some(data.target_index(0)..data.target_index(data.len() - 1) + 1)
}

/// Trains the feed-forward regressor on already scaled windows. `scaler` is
/// the transform that produced them.
pub fn train_ann(
    data: &WindowedDataset,
    scaler: ScalerParams,
    cfg: &TrainConfig,
) -> Result<(ForecastModel, FitReport), ModelError> {
    check_training_input(data, cfg)?;
    let mut rng = RngStream::derive(cfg.seed, STREAM_INIT);
    let net = AnnNet::new(data.window(), &AnnNet::HIDDEN, &mut rng);
    let (net, report) = train_network(net, data, cfg)?;
    let model = ForecastModel {
        window: data.window(),
        scaler,
        trained_on: trained_range(data),
        params: ModelParams::Ann(net),
    };
    Ok((model, report))
}

/// Two stacked LSTM layers with a linear head on the last hidden state.
pub fn train_lstm(
    data: &WindowedDataset,
    scaler: ScalerParams,
    cfg: &TrainConfig,
) -> Result<(ForecastModel, FitReport), ModelError> {
    check_training_input(data, cfg)?;
    let mut rng = RngStream::derive(cfg.seed, STREAM_INIT);
    let net = RecurrentNet::new(
        LSTM_LAYERS,
        cfg.hidden(),
        cfg.dropout_rate,
        &mut rng,
        LstmCellParams::new,
    );
    let (net, report) = train_network(net, data, cfg)?;
    let model = ForecastModel {
        window: data.window(),
        scaler,
        trained_on: trained_range(data),
        params: ModelParams::Lstm(net),
    };
    Ok((model, report))
}

/// Single-layer tanh recurrence with a linear head.
pub fn train_rnn(
    data: &WindowedDataset,
    scaler: ScalerParams,
    cfg: &TrainConfig,
) -> Result<(ForecastModel, FitReport), ModelError> {
    check_training_input(data, cfg)?;
    let mut rng = RngStream::derive(cfg.seed, STREAM_INIT);
    let net = RecurrentNet::new(
        RNN_LAYERS,
        cfg.hidden(),
        cfg.dropout_rate,
        &mut rng,
        RnnCellParams::new,
    );
    let (net, report) = train_network(net, data, cfg)?;
    let model = ForecastModel {
        window: data.window(),
        scaler,
        trained_on: trained_range(data),
        params: ModelParams::Rnn(net),
    };
    Ok((model, report))
}

/// Persistence forecaster: each window predicts its own last value.
pub fn fit_naive(window: usize, scaler: ScalerParams) -> ForecastModel {
    ForecastModel {
        window,
        scaler,
        trained_on: None,
        params: ModelParams::Naive,
    }
}

/// One scaled-space prediction per row of `inputs`, with dropout disabled.
pub fn predict(model: &ForecastModel, inputs: &Matrix) -> Result<Vec<f64>, ModelError> {
    if inputs.cols() != model.window {
        return Err(ModelError::ShapeMismatch {
            expected: model.window,
            found: inputs.cols(),
        });
    }
    // Inference never draws from the stream.
    let mut rng = RngStream::new(0);
    Ok(match &model.params {
        ModelParams::Naive => (0..inputs.rows())
            .map(|r| inputs.get(r, model.window - 1))
            .collect(),
        ModelParams::Ann(net) => net.forward(inputs, Mode::Infer, &mut rng)?,
        ModelParams::Lstm(net) => net.forward(inputs, Mode::Infer, &mut rng)?,
        ModelParams::Rnn(net) => net.forward(inputs, Mode::Infer, &mut rng)?,
    })
}

/// [`predict`] mapped back to price units with the model's scaler.
pub fn predict_prices(model: &ForecastModel, inputs: &Matrix) -> Result<Vec<f64>, ModelError> {
    Ok(invert_scaler(&model.scaler, &predict(model, inputs)?))
}

#[derive(Serialize, Deserialize)]
struct Container<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: T,
}

/// Writes a JSON container `{format, version, ...body}`. Floats are written
/// in shortest round-trip form and parsed back exactly.
pub(crate) fn write_container<T: Serialize, W: Write>(
    format: &str,
    body: &T,
    out: W,
) -> Result<(), ModelError> {
    let c = Container {
        format: format.to_string(),
        version: MODEL_VERSION,
        body,
    };
    serde_json::to_writer(out, &c)?;
    Ok(())
}

pub(crate) fn read_container<T: for<'de> Deserialize<'de>, R: Read>(
    format: &str,
    input: R,
) -> Result<T, ModelError> {
    let c: Container<T> = serde_json::from_reader(input)?;
    if c.format != format {
        return Err(ModelError::UnsupportedFormat(format!(
            "expected format `{format}`, found `{}`",
            c.format
        )));
    }
    if c.version != MODEL_VERSION {
        return Err(ModelError::UnsupportedFormat(format!(
            "version {}",
            c.version
        )));
    }
    Ok(c.body)
}

pub fn save_model<W: Write>(model: &ForecastModel, out: W) -> Result<(), ModelError> {
    write_container(MODEL_FORMAT, model, out)
}

pub fn load_model<R: Read>(input: R) -> Result<ForecastModel, ModelError> {
    read_container(MODEL_FORMAT, input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{fit_scaler, make_windows, ScalerKind};

    fn tiny_cfg() -> TrainConfig {
        TrainConfig {
            epochs: 3,
            batch_size: 4,
            hidden_size: Some(3),
            seed: 11,
            ..TrainConfig::default()
        }
    }

    fn ramp(n: usize) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * 0.3).sin()).collect()
    }

    #[test]
    fn config_defaults_and_validation() {
        let c = TrainConfig::default();
        assert_eq!(
            (c.epochs, c.batch_size, c.learning_rate, c.dropout_rate),
            (50, 32, 1e-3, 0.2)
        );
        assert!(c.shuffle);
        for bad in [
            TrainConfig {
                epochs: 0,
                ..c.clone()
            },
            TrainConfig {
                batch_size: 0,
                ..c.clone()
            },
            TrainConfig {
                dropout_rate: 1.0,
                ..c.clone()
            },
            TrainConfig {
                learning_rate: -1.0,
                ..c.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(ModelError::InvalidConfig(_))));
        }
    }

    #[test]
    fn naive_predicts_last_value() {
        let m = fit_naive(2, ScalerParams::identity());
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(predict(&m, &x).unwrap(), vec![2.0, 4.0]);
        assert!(matches!(
            predict(&m, &Matrix::zeros(1, 3)),
            Err(ModelError::ShapeMismatch {
                expected: 2,
                found: 3
            })
        ));
    }

    #[test]
    fn prices_use_the_stored_scaler() {
        let scaler = fit_scaler(&[2.0, 6.0], ScalerKind::MinMax).unwrap();
        let m = fit_naive(1, scaler);
        let x = Matrix::from_rows(&[vec![0.5]]).unwrap();
        assert_eq!(predict_prices(&m, &x).unwrap(), vec![4.0]);
    }

    #[test]
    fn empty_dataset_rejected() {
        let d = make_windows(&ramp(10), 3).unwrap().subset(0..0);
        assert!(matches!(
            train_ann(&d, ScalerParams::identity(), &tiny_cfg()),
            Err(ModelError::EmptyDataset)
        ));
    }

    #[test]
    fn report_echoes_config_and_epochs() {
        let d = make_windows(&ramp(30), 4).unwrap();
        let (m, r) = train_rnn(&d, ScalerParams::identity(), &tiny_cfg()).unwrap();
        assert_eq!(r.epoch_losses.len(), 3);
        assert_eq!(r.config, tiny_cfg());
        assert_eq!(m.kind(), ModelKind::Rnn);
        assert_eq!(m.trained_on, Some(4..30));
    }

    #[test]
    fn container_round_trip_is_exact() {
        let d = make_windows(&ramp(30), 4).unwrap();
        let (m, _) = train_lstm(&d, ScalerParams::identity(), &tiny_cfg()).unwrap();
        let mut buf = Vec::new();
        save_model(&m, &mut buf).unwrap();
        let back = load_model(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(
            predict(&back, &d.inputs).unwrap(),
            predict(&m, &d.inputs).unwrap()
        );
    }

    #[test]
    fn container_rejects_other_versions() {
        let m = fit_naive(2, ScalerParams::identity());
        let mut buf = Vec::new();
        save_model(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf)
            .unwrap()
            .replace("\"version\":1", "\"version\":9");
        assert!(matches!(
            load_model(text.as_bytes()),
            Err(ModelError::UnsupportedFormat(_))
        ));
    }
}
