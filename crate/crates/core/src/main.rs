use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use log::{error, info, LevelFilter};

use stackcast::harness::{
    generate_synthetic, read_clean, run_experiment, write_predictions_csv, Artifact,
    ExperimentConfig, HarnessError, SyntheticKind, SyntheticSpec,
};
use stackcast::market_data::{Field, PriceSeries};

const LOG_ENV: &str = "STACKCAST_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "stackcast",
    version,
    about = "Stacked ANN/LSTM price forecasting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse, deduplicate and impute an OHLCV CSV.
    Clean {
        #[arg(long)]
        input: PathBuf,
        /// Destination CSV, or `-` for standard output.
        #[arg(long)]
        output: PathBuf,
        /// Keep only rows for this symbol.
        #[arg(long)]
        symbol: Option<String>,
    },
    /// Write a seeded synthetic OHLCV series.
    Synth {
        /// sine_noise, ar1_trend or random_walk.
        #[arg(long)]
        kind: SyntheticKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noise standard deviation; defaults depend on the kind.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train, stack and score the models listed in a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Forecast every window of a CSV with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = Field::Close)]
        field: Field,
        #[arg(long)]
        symbol: Option<String>,
    },
}

/// Exit status 1 for bad input or configuration, 2 for everything else.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_validation() {
            Failure::validation(e.to_string())
        } else {
            Failure::runtime(e.to_string())
        }
    }
}

fn init_logging() -> Result<(), Failure> {
    let level = match std::env::var(LOG_ENV) {
        Err(_) => LevelFilter::Info,
        Ok(v) => match v.trim().to_ascii_lowercase().as_str() {
            "error" => LevelFilter::Error,
            "info" => LevelFilter::Info,
            "debug" => LevelFilter::Debug,
            _ => {
                return Err(Failure::validation(format!(
                    "{LOG_ENV} must be error, info or debug, got `{v}`"
                )))
            }
        },
    };
    env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .format_timestamp(None)
        .init();
    Ok(())
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let res = if path.as_os_str() == "-" {
        let mut out = io::stdout().lock();
        out.write_all(bytes).and_then(|_| out.flush())
    } else {
        fs::write(path, bytes)
    };
    res.map_err(|e| Failure::runtime(format!("{}: {e}", path.display())))?;
    if path.as_os_str() != "-" {
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn read_series(input: &Path, symbol: Option<&str>) -> Result<PriceSeries, Failure> {
    let (series, report) = read_clean(input, symbol)?;
    info!(
        "{}: {} rows in, {} out, {} duplicates, {} imputed cells, {} range violations",
        input.display(),
        report.rows_in,
        report.rows_out,
        report.duplicates_removed,
        report.imputed_cells.iter().sum::<usize>(),
        report.range_violations
    );
    Ok(series)
}

fn series_csv(series: &PriceSeries) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    series
        .write_csv(&mut buf)
        .map_err(|e| Failure::runtime(e.to_string()))?;
    Ok(buf)
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Clean {
            input,
            output,
            symbol,
        } => {
            let series = read_series(&input, symbol.as_deref())?;
            write_output(&output, &series_csv(&series)?)
        }
        Command::Synth {
            kind,
            n,
            seed,
            sigma,
            output,
        } => {
            let mut spec = SyntheticSpec::new(kind, n, seed);
            if let Some(s) = sigma {
                spec.sigma = s;
            }
            let series = generate_synthetic(&spec)?;
            write_output(&output, &series_csv(&series)?)
        }
        Command::Run { config, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let outcome = run_experiment(&cfg)?;
            for row in &outcome.table.rows {
                let m = &row.metrics;
                info!(
                    "{:<6} r2 {:.6} mae {:.6} rmse {:.6}",
                    row.model, m.r2, m.mae, m.rmse
                );
            }
            info!("results in {}", cfg.output_dir.display());
            Ok(())
        }
        Command::Predict {
            model,
            input,
            output,
            field,
            symbol,
        } => {
            let artifact = Artifact::load(&model)?;
            let series = read_series(&input, symbol.as_deref())?;
            let predictions = artifact.forecast(&series, field)?;
            write_output(&output, write_predictions_csv(&predictions).as_bytes())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = init_logging().and_then(|()| execute(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if log::log_enabled!(log::Level::Error) {
                error!("{}", f.message);
            } else {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
