//! Seeded synthetic price series for desk-scale experiments.
//!
//! * `sine_noise`: `x_t = A·sin(2πt/period) + offset + ε_t`
//! * `ar1_trend`: `x_t = drift·t + φ·x_{t−1} + ε_t` with `x_{−1} = 0`
//! * `random_walk`: `x_t = x_{t−1} + ε_t` with `x_{−1} = offset`
//!
//! `t` starts at 0 and `ε_t ~ N(0, σ²)`. The signal becomes the close; open
//! equals close, high and low sit `BAND` above and below it, and volume is
//! constant. Dates are consecutive calendar days from 2000-01-01.

use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::market_data::PriceSeries;
use crate::nn::RngStream;
use crate::preprocess::DEFAULT_WINDOW;

pub const BAND: f64 = 0.01;
pub const VOLUME: f64 = 1_000_000.0;
pub const SYMBOL: &str = "SYN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    SineNoise,
    Ar1Trend,
    RandomWalk,
}

impl SyntheticKind {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::SineNoise => "sine_noise",
            SyntheticKind::Ar1Trend => "ar1_trend",
            SyntheticKind::RandomWalk => "random_walk",
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            SyntheticKind::SineNoise,
            SyntheticKind::Ar1Trend,
            SyntheticKind::RandomWalk,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| HarnessError::InvalidSpec(format!("unknown kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub amplitude: f64,
    pub period: f64,
    pub offset: f64,
    pub phi: f64,
    pub drift: f64,
    /// Window and fold count the series must support: `n > T + 2(k + 1)`.
    pub window: usize,
    pub folds: usize,
}

impl SyntheticSpec {
    /// Defaults per kind: sine uses σ 0.05, amplitude 1, period 50 and
    /// offset 10; AR(1) uses σ 1, φ 0.9 and drift 0.001; the walk uses σ 1
    /// from 100.
    pub fn new(kind: SyntheticKind, n: usize, seed: u64) -> Self {
        let sigma = match kind {
            SyntheticKind::SineNoise => 0.05,
            SyntheticKind::Ar1Trend | SyntheticKind::RandomWalk => 1.0,
        };
        let offset = match kind {
            SyntheticKind::RandomWalk => 100.0,
            _ => 10.0,
        };
        Self {
            kind,
            n,
            sigma,
            seed,
            amplitude: 1.0,
            period: 50.0,
            offset,
            phi: 0.9,
            drift: 0.001,
            window: DEFAULT_WINDOW,
            folds: super::DEFAULT_FOLDS,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidSpec(m));
        let min = self.window + 2 * (self.folds + 1);
        if self.n <= min {
            return bad(format!(
                "n = {} must exceed T + 2(k+1) = {min} for T = {}, k = {}",
                self.n, self.window, self.folds
            ));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!(
                "sigma {} must be finite and non-negative",
                self.sigma
            ));
        }
        if !(self.period.is_finite() && self.period > 0.0) {
            return bad(format!("period {} must be positive", self.period));
        }
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("offset", self.offset),
            ("phi", self.phi),
            ("drift", self.drift),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<PriceSeries, HarnessError> {
    spec.validate()?;
    let mut rng = RngStream::new(spec.seed);
    let mut close = Vec::with_capacity(spec.n);
    let mut prev = match spec.kind {
        SyntheticKind::RandomWalk => spec.offset,
        _ => 0.0,
    };
    for t in 0..spec.n {
        let eps = if spec.sigma > 0.0 {
            spec.sigma * rng.standard_normal()
        } else {
            0.0
        };
        let tf = t as f64;
        let x = match spec.kind {
            SyntheticKind::SineNoise => {
                spec.amplitude * (2.0 * std::f64::consts::PI * tf / spec.period).sin()
                    + spec.offset
                    + eps
            }
            SyntheticKind::Ar1Trend => spec.drift * tf + spec.phi * prev + eps,
            SyntheticKind::RandomWalk => prev + eps,
        };
        if !x.is_finite() {
            return Err(HarnessError::InvalidSpec(format!(
                "series diverged at t = {t}"
            )));
        }
        close.push(x);
        prev = x;
    }
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    let dates = (0..spec.n as u64)
        .map(|i| start.checked_add_days(Days::new(i)).expect("date in range"))
        .collect();
    let high = close.iter().map(|c| c + BAND).collect();
    let low = close.iter().map(|c| c - BAND).collect();
    let volume = vec![VOLUME; spec.n];
    PriceSeries::new(SYMBOL, dates, [close.clone(), high, low, close, volume])
        .map_err(|e| HarnessError::InvalidSpec(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::Field;

    #[test]
    fn noiseless_sine_is_periodic() {
        let spec = SyntheticSpec {
            sigma: 0.0,
            period: 10.0,
            ..SyntheticSpec::new(SyntheticKind::SineNoise, 100, 1)
        };
        let s = generate_synthetic(&spec).unwrap();
        let c = s.field(Field::Close);
        for t in 0..90 {
            assert!((c[t] - c[t + 10]).abs() < 1e-12);
        }
    }

    #[test]
    fn ar1_unrolls_by_hand() {
        let spec = SyntheticSpec {
            sigma: 0.0,
            phi: 0.0,
            drift: 1.0,
            ..SyntheticSpec::new(SyntheticKind::Ar1Trend, 50, 0)
        };
        let s = generate_synthetic(&spec).unwrap();
        assert_eq!(&s.field(Field::Close)[..5], &[0.0, 1.0, 2.0, 3.0, 4.0]);

        // φ = 0.5, drift 1: 0, 1, 2.5, 4.25, 6.125
        let spec = SyntheticSpec { phi: 0.5, ..spec };
        let s = generate_synthetic(&spec).unwrap();
        assert_eq!(&s.field(Field::Close)[..5], &[0.0, 1.0, 2.5, 4.25, 6.125]);
    }

    #[test]
    fn same_seed_same_series() {
        let spec = SyntheticSpec::new(SyntheticKind::RandomWalk, 60, 5);
        assert_eq!(
            generate_synthetic(&spec).unwrap(),
            generate_synthetic(&spec).unwrap()
        );
        let other = SyntheticSpec {
            seed: 6,
            ..spec.clone()
        };
        assert_ne!(
            generate_synthetic(&spec).unwrap(),
            generate_synthetic(&other).unwrap()
        );
    }

    #[test]
    fn emitted_rows_are_consistent() {
        let s = generate_synthetic(&SyntheticSpec::new(SyntheticKind::SineNoise, 50, 2)).unwrap();
        assert!(s.to_records().iter().all(|r| !r.violates_range()));
        assert!(s.field(Field::Volume).iter().all(|&v| v == VOLUME));
        assert!(s.dates().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn invalid_specs() {
        let base = SyntheticSpec::new(SyntheticKind::SineNoise, 100, 0);
        for spec in [
            SyntheticSpec {
                n: 42,
                ..base.clone()
            },
            SyntheticSpec {
                sigma: -0.1,
                ..base.clone()
            },
            SyntheticSpec {
                period: 0.0,
                ..base.clone()
            },
            SyntheticSpec {
                drift: f64::NAN,
                ..base.clone()
            },
        ] {
            assert!(matches!(
                generate_synthetic(&spec),
                Err(HarnessError::InvalidSpec(_))
            ));
        }
        assert!(generate_synthetic(&SyntheticSpec { n: 43, ..base }).is_ok());
    }
}
