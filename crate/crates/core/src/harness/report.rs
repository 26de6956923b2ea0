//! Report files.
//!
//! Layout under the output directory:
//!
//! ```text
//! report.csv              model,r2,mae,mse,rmse,n
//! report.json             table, config echo, seed, split, training summaries
//! predictions/<model>.csv date,actual,predicted (price units)
//! models/<model>.json     model container
//! ```
//!
//! Floats in CSV files are written in scientific notation with 17
//! significant digits, which round-trips every `f64`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{
    ComparisonTable, ExperimentConfig, ExperimentOutcome, FitSummary, HarnessError, IndexAudit,
    ModelPredictions, SplitPlan, TableRow,
};
use crate::ensemble::StackingCoefficients;
use crate::market_data::CleaningReport;
use crate::metrics::{MetricsReport, ValueSpace};
use crate::preprocess::ScalerParams;

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const PREDICTIONS_DIR: &str = "predictions";
pub const MODELS_DIR: &str = "models";

const TABLE_HEADER: &str = "model,r2,mae,mse,rmse,n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn table_to_csv(table: &ComparisonTable) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in &table.rows {
        let m = &r.metrics;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.model,
            fmt_f64(m.r2),
            fmt_f64(m.mae),
            fmt_f64(m.mse),
            fmt_f64(m.rmse),
            m.n
        )
        .expect("writing to a String");
    }
    out
}

/// Inverse of [`table_to_csv`]; values are taken to be in price units.
pub fn parse_table_csv(text: &str) -> Result<ComparisonTable, String> {
    let mut lines = text.lines();
    if lines.next() != Some(TABLE_HEADER) {
        return Err("unexpected report header".into());
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(format!("row {} has {} fields", i + 1, cols.len()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| format!("row {}: {e}", i + 1));
        rows.push(TableRow {
            model: cols[0].to_string(),
            metrics: MetricsReport {
                r2: num(cols[1])?,
                mae: num(cols[2])?,
                mse: num(cols[3])?,
                rmse: num(cols[4])?,
                n: cols[5].parse().map_err(|e| format!("row {}: {e}", i + 1))?,
                space: ValueSpace::Price,
            },
        });
    }
    Ok(ComparisonTable { rows })
}

#[derive(Serialize)]
struct JsonRow<'a> {
    #[serde(flatten)]
    row: &'a TableRow,
    predictions: String,
    model_file: String,
}

#[derive(Serialize)]
struct MetaSummary<'a> {
    coefficients: &'a StackingCoefficients,
    meta_mse: f64,
    lstm_mse: f64,
    ann_mse: f64,
    n: usize,
    ridge: bool,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    seed: u64,
    config: &'a ExperimentConfig,
    rows: Vec<JsonRow<'a>>,
    split: &'a SplitPlan,
    audit: &'a IndexAudit,
    scaler: &'a ScalerParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    cleaning: Option<&'a CleaningReport>,
    training: &'a BTreeMap<String, FitSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stacking: Option<MetaSummary<'a>>,
}

/// `date,actual,predicted` rows in price units.
pub fn write_predictions_csv(p: &ModelPredictions) -> String {
    let mut text = String::from("date,actual,predicted\n");
    for i in 0..p.dates.len() {
        writeln!(
            text,
            "{},{},{}",
            p.dates[i].format("%Y-%m-%d"),
            fmt_f64(p.actual[i]),
            fmt_f64(p.predicted[i])
        )
        .expect("writing to a String");
    }
    text
}

fn rel(dir: &str, model: &str, ext: &str) -> String {
    format!("{dir}/{model}.{ext}")
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// Writes the requested report formats plus per-model predictions and model
/// files under `cfg.output_dir`. Returns the paths written.
pub fn emit_report(
    outcome: &ExperimentOutcome,
    cfg: &ExperimentConfig,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, HarnessError> {
    if outcome.table.rows.is_empty() {
        return Err(HarnessError::Config("nothing to report".into()));
    }
    let root = &cfg.output_dir;
    for dir in [
        root.clone(),
        root.join(PREDICTIONS_DIR),
        root.join(MODELS_DIR),
    ] {
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    }
    let mut written = Vec::new();

    for p in &outcome.predictions {
        let path = root.join(rel(PREDICTIONS_DIR, &p.model, "csv"));
        write_file(&path, write_predictions_csv(p).as_bytes())?;
        written.push(path);
    }

    for (name, artifact) in &outcome.artifacts {
        let path = root.join(rel(MODELS_DIR, name, "json"));
        let mut buf = Vec::new();
        artifact
            .write(&mut buf)
            .map_err(|e| HarnessError::io(&path, std::io::Error::other(e)))?;
        write_file(&path, &buf)?;
        written.push(path);
    }

    for format in formats {
        match format {
            ReportFormat::Csv => {
                let path = root.join(REPORT_CSV);
                write_file(&path, table_to_csv(&outcome.table).as_bytes())?;
                written.push(path);
            }
            ReportFormat::Json => {
                let report = JsonReport {
                    seed: cfg.seed,
                    config: cfg,
                    rows: outcome
                        .table
                        .rows
                        .iter()
                        .map(|row| JsonRow {
                            row,
                            predictions: rel(PREDICTIONS_DIR, &row.model, "csv"),
                            model_file: rel(MODELS_DIR, &row.model, "json"),
                        })
                        .collect(),
                    split: &outcome.plan,
                    audit: &outcome.audit,
                    scaler: &outcome.scaler,
                    cleaning: outcome.cleaning.as_ref(),
                    training: &outcome.fits,
                    stacking: outcome.stacked().map(|s| MetaSummary {
                        coefficients: &s.coefficients,
                        meta_mse: s.report.meta_mse,
                        lstm_mse: s.report.lstm_mse,
                        ann_mse: s.report.ann_mse,
                        n: s.report.n,
                        ridge: s.report.ridge,
                    }),
                };
                let mut text = serde_json::to_string_pretty(&report)
                    .map_err(|e| HarnessError::io(&root.join(REPORT_JSON), e.into()))?;
                text.push('\n');
                let path = root.join(REPORT_JSON);
                write_file(&path, text.as_bytes())?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
