//! Time-series container and the cleaning pipeline: duplicate removal,
//! forward/backward imputation, chronological splitting and windowing.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HOUR: i64 = 3600;

/// Timestamped observations for one station. Values are optional; `None`
/// marks a missing observation.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    station_id: String,
    timestamps: Vec<i64>,
    values: Vec<Option<f64>>,
    frequency_seconds: i64,
}

impl TimeSeries {
    pub fn new(station_id: impl Into<String>, timestamps: Vec<i64>, values: Vec<Option<f64>>) -> Result<Self> {
        Self::with_frequency(station_id, timestamps, values, HOUR)
    }

    pub fn with_frequency(station_id: impl Into<String>, timestamps: Vec<i64>, values: Vec<Option<f64>>, frequency_seconds: i64) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(Error::Shape(format!(
                "{} timestamps but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if frequency_seconds <= 0 {
            return Err(Error::Config(format!("frequency must be positive, got {frequency_seconds}")));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Format(format!(
                "timestamps not strictly increasing at index {}",
                i + 1
            )));
        }
        if let Some(&bad) = values.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        Ok(Self {
            station_id: station_id.into(),
            timestamps,
            values,
            frequency_seconds,
        })
    }

    /// A complete, evenly spaced series starting at `start`.
    pub fn regular(station_id: impl Into<String>, start: i64, frequency_seconds: i64, values: &[f64]) -> Result<Self> {
        let timestamps = (0..values.len() as i64).map(|i| start + i * frequency_seconds).collect();
        Self::with_frequency(station_id, timestamps, values.iter().map(|&v| Some(v)).collect(), frequency_seconds)
    }

    pub fn station_id(&self) -> &str {
        &self.station_id
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn frequency_seconds(&self) -> i64 {
        self.frequency_seconds
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_count() == 0
    }

    /// Values as plain floats; fails if any are missing.
    pub fn complete_values(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::Domain(format!("missing value at index {i}"))))
            .collect()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> TimeSeries {
        TimeSeries {
            station_id: self.station_id.clone(),
            timestamps: self.timestamps[range.clone()].to_vec(),
            values: self.values[range].to_vec(),
            frequency_seconds: self.frequency_seconds,
        }
    }

    /// Re-lays the series on its regular grid from first to last timestamp.
    /// Grid points without an observation become missing; observations off
    /// the grid are rejected.
    pub fn regularize(&self) -> Result<TimeSeries> {
        let Some(&first) = self.timestamps.first() else {
            return Err(Error::EmptySeries);
        };
        let last = *self.timestamps.last().unwrap();
        let step = self.frequency_seconds;
        let n = ((last - first) / step) as usize + 1;
        let mut values = vec![None; n];
        for (&t, &v) in self.timestamps.iter().zip(&self.values) {
            if (t - first) % step != 0 {
                return Err(Error::Format(format!("timestamp {t} is off the {step}s grid")));
            }
            values[((t - first) / step) as usize] = v;
        }
        let timestamps = (0..n as i64).map(|i| first + i * step).collect();
        TimeSeries::with_frequency(self.station_id.clone(), timestamps, values, step)
    }
}

/// Builds a series from raw rows, keeping the first row for every repeated
/// timestamp. Surviving rows keep their input order, which must already be
/// chronological.
pub fn dedup_by_timestamp(station_id: &str, raw: &[(i64, Option<f64>)]) -> Result<TimeSeries> {
    if raw.is_empty() {
        return Err(Error::EmptySeries);
    }
    let mut seen = HashSet::with_capacity(raw.len());
    let (timestamps, values): (Vec<i64>, Vec<Option<f64>>) = raw.iter().filter(|(t, _)| seen.insert(*t)).copied().unzip();
    TimeSeries::new(station_id, timestamps, values)
}

/// Fills each gap with the last preceding present value, then fills a leading
/// run of missing values with the first present value.
pub fn impute_forward_backward(series: &TimeSeries) -> Result<TimeSeries> {
    let Some(first) = series.values.iter().flatten().next().copied() else {
        return Err(Error::AllMissing);
    };
    let mut last = first;
    let values = series
        .values
        .iter()
        .map(|v| {
            if let Some(x) = v {
                last = *x;
            }
            Some(last)
        })
        .collect();
    Ok(TimeSeries {
        values,
        ..series.clone()
    })
}

/// Train / validation / test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.70,
            val_fraction: 0.15,
            test_fraction: 0.15,
        }
    }
}

impl SplitSpec {
    pub fn new(train_fraction: f64, val_fraction: f64, test_fraction: f64) -> Result<Self> {
        let spec = Self {
            train_fraction,
            val_fraction,
            test_fraction,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train_fraction, self.val_fraction, self.test_fraction];
        if parts.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Config(format!("split fractions must lie in (0, 1): {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions must sum to 1: {parts:?}")));
        }
        Ok(())
    }

    /// `(train, val, test)` lengths: floor for the first two, remainder to test.
    pub fn lengths(&self, n: usize) -> (usize, usize, usize) {
        // the epsilon absorbs products like 100 * 0.7 = 69.99999999999999
        let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let train = floor(self.train_fraction);
        let val = floor(self.val_fraction);
        (train, val, n - train - val)
    }
}

/// Splits a complete series into contiguous train, validation and test parts.
pub fn split_chronological(series: &TimeSeries, spec: &SplitSpec) -> Result<(TimeSeries, TimeSeries, TimeSeries)> {
    spec.validate()?;
    if !series.is_complete() {
        return Err(Error::Domain("split requires a complete series".into()));
    }
    let n = series.len();
    if n < 3 {
        return Err(Error::TooShort(format!("split needs at least 3 observations, got {n}")));
    }
    let (train, val, _) = spec.lengths(n);
    Ok((
        series.slice(0..train),
        series.slice(train..train + val),
        series.slice(train + val..n),
    ))
}

/// A forecast origin: `context` immediately precedes `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub context: Vec<f64>,
    pub target: Vec<f64>,
    /// Index of the first target point in the source series.
    pub origin_index: usize,
    /// Timestamp of the first target point.
    pub origin_timestamp: i64,
    /// Timestamp of the last context point.
    pub context_end_timestamp: i64,
    pub target_timestamps: Vec<i64>,
}

impl Window {
    fn from_series(series: &TimeSeries, values: &[f64], origin: usize, context: usize, horizon: usize) -> Self {
        let ts = series.timestamps();
        Window {
            context: values[origin - context..origin].to_vec(),
            target: values[origin..origin + horizon].to_vec(),
            origin_index: origin,
            origin_timestamp: ts[origin],
            context_end_timestamp: ts[origin - 1],
            target_timestamps: ts[origin..origin + horizon].to_vec(),
        }
    }
}

fn check_window_args(series: &TimeSeries, context: usize, horizon: usize) -> Result<Vec<f64>> {
    if context == 0 || horizon == 0 {
        return Err(Error::Config("context and horizon must be positive".into()));
    }
    let values = series.complete_values()?;
    if values.len() < context + horizon {
        return Err(Error::TooShort(format!(
            "{} observations cannot hold context {context} + horizon {horizon}",
            values.len()
        )));
    }
    Ok(values)
}

/// Rolling windows at origins `context, context + stride, ...`.
pub fn make_windows(series: &TimeSeries, context: usize, horizon: usize, stride: usize) -> Result<Vec<Window>> {
    if stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    let values = check_window_args(series, context, horizon)?;
    Ok((context..=values.len() - horizon)
        .step_by(stride)
        .map(|origin| Window::from_series(series, &values, origin, context, horizon))
        .collect())
}

/// Windows at the given origins (index of the first target point).
pub fn windows_at(series: &TimeSeries, context: usize, horizon: usize, origins: &[usize]) -> Result<Vec<Window>> {
    let values = check_window_args(series, context, horizon)?;
    origins
        .iter()
        .map(|&o| {
            if o < context || o + horizon > values.len() {
                Err(Error::TooShort(format!("origin {o} leaves no room for context {context} and horizon {horizon}")))
            } else {
                Ok(Window::from_series(series, &values, o, context, horizon))
            }
        })
        .collect()
}
