//! Experiment orchestration: config, the walk-forward pipeline and report
//! emission.
//!
//! Split protocol over the `n = N − T` windows, using the `k` folds of
//! [`time_series_split`]:
//!
//! * base learners train on the training range of fold `k − 1`;
//! * the stacking meta-model fits on the test range of fold `k − 1`;
//! * every model is scored on the test range of fold `k`, which no fitting
//!   step sees.
//!
//! The scaler is fit on the series values covered by the base-training
//! windows (inputs and targets) and nothing later.

mod artifact;
mod report;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use artifact::Artifact;
pub use report::{
    emit_report, parse_table_csv, table_to_csv, write_predictions_csv, ReportFormat, MODELS_DIR,
    PREDICTIONS_DIR, REPORT_CSV, REPORT_JSON,
};
pub use synth::{generate_synthetic, SyntheticKind, SyntheticSpec};

use crate::ensemble::{fit_stacking, predict_stacked_prices, EnsembleError, StackedModel};
use crate::market_data::{clean, parse_csv, CleaningReport, DataError, Field, PriceSeries};
use crate::metrics::{MetricsError, MetricsReport, ValueSpace};
use crate::models::{
    fit_naive, predict_prices, train_ann, train_lstm, train_rnn, FitReport, ForecastModel,
    ModelError, TrainConfig,
};
use crate::preprocess::{
    apply_scaler, fit_scaler, make_windows, time_series_split, PreprocessError, ScalerKind,
    ScalerParams, DEFAULT_WINDOW,
};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid model file: {0}")]
    InvalidModel(String),
    /// A user-named input (config, data or model file) could not be read.
    #[error("cannot read {}: {source}", path.display())]
    Unreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{stage}: {source}")]
    Data {
        stage: &'static str,
        source: DataError,
    },
    #[error("{stage}: {source}")]
    Preprocess {
        stage: &'static str,
        source: PreprocessError,
    },
    #[error("{stage}: {source}")]
    Model {
        stage: &'static str,
        source: ModelError,
    },
    #[error("{stage}: {source}")]
    Ensemble {
        stage: &'static str,
        source: EnsembleError,
    },
    #[error("{stage}: {source}")]
    Metrics {
        stage: &'static str,
        source: MetricsError,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl HarnessError {
    /// True for problems with the user's config or input data, as opposed
    /// to failures while running a valid pipeline.
    pub fn is_validation(&self) -> bool {
        match self {
            HarnessError::Config(_)
            | HarnessError::InvalidSpec(_)
            | HarnessError::InvalidModel(_)
            | HarnessError::Unreadable { .. }
            | HarnessError::Preprocess { .. } => true,
            HarnessError::Data { source, .. } => !matches!(source, DataError::Io(_)),
            _ => false,
        }
    }

    pub(crate) fn unreadable(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Unreadable {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Entries of the experiment's model list. `stack` combines the LSTM and ANN
/// bases, which are trained even when not listed themselves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentModel {
    Naive,
    Rnn,
    Ann,
    Lstm,
    Stack,
}

impl ExperimentModel {
    pub const ALL: [ExperimentModel; 5] = [
        ExperimentModel::Naive,
        ExperimentModel::Rnn,
        ExperimentModel::Ann,
        ExperimentModel::Lstm,
        ExperimentModel::Stack,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentModel::Naive => "naive",
            ExperimentModel::Rnn => "rnn",
            ExperimentModel::Ann => "ann",
            ExperimentModel::Lstm => "lstm",
            ExperimentModel::Stack => "stack",
        }
    }

    /// Constant mixed into the experiment seed: `seed ^ salt`.
    pub fn seed_salt(self) -> u64 {
        match self {
            ExperimentModel::Naive => 0x6e61_6976_6500_0001,
            ExperimentModel::Rnn => 0x726e_6e00_0000_0002,
            ExperimentModel::Ann => 0x616e_6e00_0000_0003,
            ExperimentModel::Lstm => 0x6c73_746d_0000_0004,
            ExperimentModel::Stack => 0x7374_6163_6b00_0005,
        }
    }

    fn trainable(self) -> bool {
        matches!(
            self,
            ExperimentModel::Rnn | ExperimentModel::Ann | ExperimentModel::Lstm
        )
    }
}

impl fmt::Display for ExperimentModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown model `{s}`"))
    }
}

/// Per-model training settings; unset fields keep the [`TrainConfig`]
/// defaults. Seeds always derive from the experiment seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shuffle: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_size: Option<usize>,
}

impl TrainOverrides {
    pub fn resolve(&self, seed: u64) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            dropout_rate: self.dropout_rate.unwrap_or(d.dropout_rate),
            seed,
            shuffle: self.shuffle.unwrap_or(d.shuffle),
            hidden_size: self.hidden_size.or(d.hidden_size),
        }
    }
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

fn default_folds() -> usize {
    DEFAULT_FOLDS
}

fn default_models() -> Vec<ExperimentModel> {
    ExperimentModel::ALL.to_vec()
}

/// A JSON experiment description. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    /// Keep only rows for this symbol before cleaning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<String>,
    #[serde(default)]
    pub target: Field,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub scaler: ScalerKind,
    #[serde(default = "default_models")]
    pub models: Vec<ExperimentModel>,
    #[serde(default)]
    pub overrides: BTreeMap<ExperimentModel, TrainOverrides>,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    /// Defaults for everything but the paths.
    pub fn new(input: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            output_dir: output_dir.into(),
            symbol: None,
            target: Field::Close,
            window: DEFAULT_WINDOW,
            folds: DEFAULT_FOLDS,
            scaler: ScalerKind::MinMax,
            models: default_models(),
            overrides: BTreeMap::new(),
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::unreadable(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.models.is_empty() {
            return bad("model list is empty".into());
        }
        let mut seen = Vec::new();
        for m in &self.models {
            if seen.contains(m) {
                return bad(format!("model `{m}` listed twice"));
            }
            seen.push(*m);
        }
        for (m, o) in &self.overrides {
            if !m.trainable() {
                return bad(format!("model `{m}` takes no training overrides"));
            }
            if !self.models.contains(m)
                && !(self.models.contains(&ExperimentModel::Stack)
                    && matches!(m, ExperimentModel::Ann | ExperimentModel::Lstm))
            {
                return bad(format!("overrides given for `{m}`, which is not run"));
            }
            o.resolve(0)
                .validate()
                .or_else(|e| bad(format!("overrides for `{m}`: {e}")))?;
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir is empty".into());
        }
        Ok(())
    }

    pub fn train_config(&self, model: ExperimentModel) -> TrainConfig {
        self.overrides
            .get(&model)
            .cloned()
            .unwrap_or_default()
            .resolve(self.seed ^ model.seed_salt())
    }

    fn wants(&self, m: ExperimentModel) -> bool {
        self.models.contains(&m)
    }

    fn needs(&self, m: ExperimentModel) -> bool {
        self.wants(m)
            || (self.wants(ExperimentModel::Stack)
                && matches!(m, ExperimentModel::Ann | ExperimentModel::Lstm))
    }
}

/// Window-sample ranges of the three pipeline stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitPlan {
    pub windows: usize,
    pub base_train: Range<usize>,
    pub meta_fit: Range<usize>,
    pub evaluation: Range<usize>,
}

impl SplitPlan {
    pub fn new(windows: usize, folds: usize) -> Result<Self, PreprocessError> {
        let f = time_series_split(windows, folds)?;
        let penultimate = &f[folds - 2];
        Ok(Self {
            windows,
            base_train: penultimate.train.clone(),
            meta_fit: penultimate.test.clone(),
            evaluation: f[folds - 1].test.clone(),
        })
    }
}

/// Series indices touched by each fitting stage, as reported by the fitted
/// artefacts themselves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IndexAudit {
    /// Values the scaler was fit on.
    pub scaler_fit: Range<usize>,
    /// Training targets recorded by each trained model.
    pub base_train: BTreeMap<String, Range<usize>>,
    /// Targets the meta-model was fit on.
    pub meta_fit: Option<Range<usize>>,
    /// Targets every table row was scored on.
    pub evaluation: Range<usize>,
}

impl IndexAudit {
    fn disjoint(a: &Range<usize>, b: &Range<usize>) -> bool {
        a.end <= b.start || b.end <= a.start
    }

    /// No fitting stage saw an evaluation target, and the meta-model saw no
    /// base-training target.
    pub fn is_clean(&self) -> bool {
        let e = &self.evaluation;
        Self::disjoint(&self.scaler_fit, e)
            && self.base_train.values().all(|r| Self::disjoint(r, e))
            && self.meta_fit.as_ref().is_none_or(|m| {
                Self::disjoint(m, e) && self.base_train.values().all(|r| Self::disjoint(r, m))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub model: String,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

/// One row per model on the final fold, best R² first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub rows: Vec<TableRow>,
}

impl ComparisonTable {
    pub fn row(&self, model: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.model == model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPredictions {
    pub model: String,
    pub dates: Vec<NaiveDate>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

/// Training summary without timing, so it can be written deterministically.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub config: TrainConfig,
}

impl From<&FitReport> for FitSummary {
    fn from(r: &FitReport) -> Self {
        Self {
            epoch_losses: r.epoch_losses.clone(),
            final_loss: r.final_loss,
            config: r.config.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub table: ComparisonTable,
    pub predictions: Vec<ModelPredictions>,
    pub artifacts: BTreeMap<String, Artifact>,
    pub fits: BTreeMap<String, FitSummary>,
    pub plan: SplitPlan,
    pub audit: IndexAudit,
    pub scaler: ScalerParams,
    pub cleaning: Option<CleaningReport>,
}

impl ExperimentOutcome {
    pub fn stacked(&self) -> Option<&StackedModel> {
        match self.artifacts.get(ExperimentModel::Stack.name()) {
            Some(Artifact::Stacked(s)) => Some(s),
            _ => None,
        }
    }
}

/// Reads an OHLCV CSV, optionally keeps one symbol, and cleans it.
pub fn read_clean(
    input: &Path,
    symbol: Option<&str>,
) -> Result<(PriceSeries, CleaningReport), HarnessError> {
    let file = fs::File::open(input).map_err(|e| HarnessError::unreadable(input, e))?;
    let mut records = parse_csv(file).map_err(|source| HarnessError::Data {
        stage: "loading input",
        source,
    })?;
    if let Some(symbol) = symbol {
        records.retain(|r| r.symbol == symbol);
    }
    clean(&records).map_err(|source| HarnessError::Data {
        stage: "cleaning input",
        source,
    })
}

/// [`read_clean`] on the configured input.
pub fn load_series(cfg: &ExperimentConfig) -> Result<(PriceSeries, CleaningReport), HarnessError> {
    read_clean(&cfg.input, cfg.symbol.as_deref())
}

/// Runs the full pipeline on an in-memory series without touching the
/// filesystem.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    series: &PriceSeries,
) -> Result<ExperimentOutcome, HarnessError> {
    cfg.validate()?;
    let prep = |stage| move |source| HarnessError::Preprocess { stage, source };
    let model_err = |stage| move |source| HarnessError::Model { stage, source };
    let t = cfg.window;
    let values = series.field(cfg.target);
    if values.len() <= t {
        return Err(prep("windowing")(PreprocessError::SeriesTooShort {
            len: values.len(),
            window: t,
        }));
    }
    let plan = SplitPlan::new(values.len() - t, cfg.folds).map_err(prep("splitting"))?;

    let scaler_fit = 0..plan.base_train.end + t;
    let scaler =
        fit_scaler(&values[scaler_fit.clone()], cfg.scaler).map_err(prep("fitting scaler"))?;
    let windows = make_windows(&apply_scaler(&scaler, values), t).map_err(prep("windowing"))?;
    let train = windows.subset(plan.base_train.clone());
    let meta = windows.subset(plan.meta_fit.clone());
    let eval = windows.subset(plan.evaluation.clone());

    let mut singles: BTreeMap<ExperimentModel, ForecastModel> = BTreeMap::new();
    let mut fits = BTreeMap::new();
    for m in [
        ExperimentModel::Naive,
        ExperimentModel::Rnn,
        ExperimentModel::Ann,
        ExperimentModel::Lstm,
    ] {
        if !cfg.needs(m) {
            continue;
        }
        let tc = cfg.train_config(m);
        let trained = match m {
            ExperimentModel::Naive => {
                singles.insert(m, fit_naive(t, scaler));
                continue;
            }
            ExperimentModel::Rnn => train_rnn(&train, scaler, &tc),
            ExperimentModel::Ann => train_ann(&train, scaler, &tc),
            _ => train_lstm(&train, scaler, &tc),
        };
        let (model, report) = trained.map_err(model_err("training"))?;
        info!(
            "{m}: {} epochs, final loss {:.4e}, {:.1}s",
            tc.epochs, report.final_loss, report.wall_time_secs
        );
        fits.insert(m.name().to_string(), FitSummary::from(&report));
        singles.insert(m, model);
    }

    let stacked = if cfg.wants(ExperimentModel::Stack) {
        let s = fit_stacking(
            singles[&ExperimentModel::Lstm].clone(),
            singles[&ExperimentModel::Ann].clone(),
            &meta,
        )
        .map_err(|source| HarnessError::Ensemble {
            stage: "fitting meta-model",
            source,
        })?;
        info!(
            "stack: beta = ({:.6}, {:.6}, {:.6}), meta mse {:.4e}",
            s.coefficients.intercept, s.coefficients.lstm, s.coefficients.ann, s.report.meta_mse
        );
        Some(s)
    } else {
        None
    };

    let eval_targets: Range<usize> = eval.target_index(0)..eval.target_index(eval.len() - 1) + 1;
    let actual = values[eval_targets.clone()].to_vec();
    let dates = series.dates()[eval_targets.clone()].to_vec();
    let mut rows = Vec::new();
    let mut predictions = Vec::new();
    let mut artifacts = BTreeMap::new();
    for &m in &cfg.models {
        let predicted = if m == ExperimentModel::Stack {
            let s = stacked.as_ref().expect("stack fitted when listed");
            predict_stacked_prices(s, &eval.inputs).map_err(|source| HarnessError::Ensemble {
                stage: "evaluating",
                source,
            })?
        } else {
            predict_prices(&singles[&m], &eval.inputs).map_err(model_err("evaluating"))?
        };
        let metrics =
            MetricsReport::compute(&actual, &predicted, ValueSpace::Price).map_err(|source| {
                HarnessError::Metrics {
                    stage: "scoring",
                    source,
                }
            })?;
        rows.push(TableRow {
            model: m.name().to_string(),
            metrics,
        });
        predictions.push(ModelPredictions {
            model: m.name().to_string(),
            dates: dates.clone(),
            actual: actual.clone(),
            predicted,
        });
        let artifact = match m {
            ExperimentModel::Stack => {
                Artifact::Stacked(Box::new(stacked.clone().expect("stack fitted")))
            }
            _ => Artifact::Single(singles[&m].clone()),
        };
        artifacts.insert(m.name().to_string(), artifact);
    }
    rows.sort_by(|a, b| {
        b.metrics
            .r2
            .total_cmp(&a.metrics.r2)
            .then_with(|| a.model.cmp(&b.model))
    });
    predictions.sort_by(|a, b| a.model.cmp(&b.model));

    let audit = IndexAudit {
        scaler_fit,
        base_train: singles
            .iter()
            .filter_map(|(m, model)| model.trained_on.clone().map(|r| (m.name().to_string(), r)))
            .collect(),
        meta_fit: stacked.as_ref().map(|s| s.report.fitted_on.clone()),
        evaluation: eval_targets,
    };
    Ok(ExperimentOutcome {
        table: ComparisonTable { rows },
        predictions,
        artifacts,
        fits,
        plan,
        audit,
        scaler,
        cleaning: None,
    })
}

/// Loads the input, runs the pipeline and writes every artefact under
/// `cfg.output_dir`. All validation happens before the first write.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    cfg.validate()?;
    let (series, cleaning) = load_series(cfg)?;
    info!(
        "loaded {} rows ({} duplicates, {} imputed cells, {} range violations)",
        cleaning.rows_out,
        cleaning.duplicates_removed,
        cleaning.imputed_cells.iter().sum::<usize>(),
        cleaning.range_violations
    );
    let mut outcome = run_pipeline(cfg, &series)?;
    outcome.cleaning = Some(cleaning);
    emit_report(&outcome, cfg, &[ReportFormat::Csv, ReportFormat::Json])?;
    Ok(outcome)
}
