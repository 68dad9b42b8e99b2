use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{ModelSpec, RunConfig, StationSource};
use crate::baselines::{ExpSmoothing, Npts, SeasonalNaive, SmoothingVariant, Theta};
use crate::data_io::{gen_corpus, read_cache, synthetic_station};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::forecast::{forecast_with_tokens, Forecast, Forecaster};
use crate::metrics::{window_metrics, MetricReport};
use crate::model::{ForecastModel, MarkovModel};
use crate::series::{impute_forward_backward, split_chronological, windows_at, TimeSeries};
use crate::tokenizer::Tokenizer;

/// Sequence model as a forecaster; `fit` fine-tunes when `steps > 0`.
pub struct SequenceForecaster {
    pub name: String,
    pub model: ForecastModel,
    pub fine_tune_steps: usize,
    pub seed: u64,
}

impl Forecaster for SequenceForecaster {
    fn name(&self) -> &str {
        &self.name
    }

    fn fit(&mut self, train: &TimeSeries) -> Result<()> {
        if self.fine_tune_steps > 0 {
            self.model.fine_tune(std::slice::from_ref(train), self.fine_tune_steps, self.seed)?;
        }
        Ok(())
    }

    fn predict(&self, context: &[f64], horizon: usize, n_samples: usize, seed: u64) -> Result<Forecast> {
        self.model.forecast(context, horizon, n_samples, seed)
    }
}

/// k-gram token model fitted on the train split, tokenized in
/// context-sized chunks that each carry their own scale.
pub struct MarkovForecaster {
    pub order: usize,
    pub tokenizer: Tokenizer,
    pub context_length: usize,
    pub clamp_nonnegative: bool,
    model: Option<MarkovModel>,
}

impl MarkovForecaster {
    pub fn new(order: usize, tokenizer: Tokenizer, context_length: usize, clamp_nonnegative: bool) -> Self {
        Self {
            order,
            tokenizer,
            context_length,
            clamp_nonnegative,
            model: None,
        }
    }
}

impl Forecaster for MarkovForecaster {
    fn name(&self) -> &str {
        if self.order == 1 {
            "Markov1"
        } else {
            "Markov2"
        }
    }

    fn fit(&mut self, train: &TimeSeries) -> Result<()> {
        let values = train.complete_values()?;
        let corpus = values
            .chunks(self.context_length.max(2))
            .map(|c| self.tokenizer.encode(c).map(|t| t.ids))
            .collect::<Result<Vec<_>>>()?;
        self.model = Some(MarkovModel::fit(&corpus, self.order, self.tokenizer.vocab().size())?);
        Ok(())
    }

    fn predict(&self, context: &[f64], horizon: usize, n_samples: usize, seed: u64) -> Result<Forecast> {
        let model = self.model.as_ref().ok_or_else(|| Error::Config("Markov forecaster used before fit".into()))?;
        forecast_with_tokens(model, &self.tokenizer, context, self.context_length, horizon, n_samples, seed, self.clamp_nonnegative)
    }
}

/// One scored forecast window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub station: String,
    pub model: String,
    pub horizon: usize,
    /// Timestamp of the first target point.
    pub origin: i64,
    /// Timestamp of the last context point.
    pub context_end: i64,
    pub target_timestamps: Vec<i64>,
    pub actual: Vec<f64>,
    pub point: Vec<f64>,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub station: String,
    pub model: String,
    /// `None` when fitting failed, which voids every horizon.
    pub horizon: Option<usize>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub station: String,
    pub model: String,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    pub windows: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub failures: Vec<CellFailure>,
    pub timings: Vec<Timing>,
    /// Seconds spent producing the shared sequence model (0 when loaded).
    pub pretrain_seconds: Option<f64>,
    pub warnings: Vec<String>,
}

/// `n` distinct, evenly spaced origins (index of the first target point) in
/// a series of length `len`.
pub fn window_origins(len: usize, context: usize, horizon: usize, n: usize) -> Result<Vec<usize>> {
    let too_short = || {
        Error::TooShort(format!(
            "test split of {len} points cannot hold {n} windows of context {context} at horizon {horizon}"
        ))
    };
    if n == 0 || len < context + horizon {
        return Err(too_short());
    }
    let span = len - horizon - context;
    if n == 1 {
        return Ok(vec![context + span]);
    }
    if span < n - 1 {
        return Err(too_short());
    }
    Ok((0..n).map(|k| context + k * span / (n - 1)).collect())
}

/// Scores `forecaster` on evenly spaced windows of `series` at one horizon.
#[allow(clippy::too_many_arguments)]
pub fn backtest(
    forecaster: &dyn Forecaster,
    series: &TimeSeries,
    context: usize,
    horizon: usize,
    n_windows: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<(EvalRow, Forecast)>> {
    let origins = window_origins(series.len(), context, horizon, n_windows)?;
    let windows = windows_at(series, context, horizon, &origins)?;
    let ts = series.timestamps();
    let mut out = Vec::with_capacity(windows.len());
    for (k, w) in windows.into_iter().enumerate() {
        let ctx_ts = &ts[w.origin_index - context..w.origin_index];
        let ctx_max = *ctx_ts.iter().max().unwrap();
        let tgt_min = *w.target_timestamps.iter().min().unwrap();
        if ctx_max >= tgt_min || w.context_end_timestamp >= w.origin_timestamp {
            return Err(Error::Leakage(w.origin_timestamp));
        }
        let f = forecaster.predict(&w.context, horizon, n_samples, derive_seed(seed, k as u64))?;
        if f.horizon() != horizon {
            return Err(Error::Shape(format!("{} returned {} steps for horizon {horizon}", forecaster.name(), f.horizon())));
        }
        let report = window_metrics(&w.target, &f.point)?;
        out.push((
            EvalRow {
                station: series.station_id().to_string(),
                model: forecaster.name().to_string(),
                horizon,
                origin: w.origin_timestamp,
                context_end: w.context_end_timestamp,
                target_timestamps: w.target_timestamps,
                actual: w.target,
                point: f.point.clone(),
                report,
            },
            f,
        ));
    }
    Ok(out)
}

/// A station after cleaning and splitting.
#[derive(Debug, Clone)]
pub struct PreparedStation {
    pub station_id: String,
    pub synthetic: bool,
    pub train: TimeSeries,
    pub val: TimeSeries,
    pub test: TimeSeries,
}

pub fn prepare_station(source: &StationSource, cfg: &RunConfig) -> Result<PreparedStation> {
    let (series, synthetic) = match source {
        StationSource::Cache { station_id, path } => {
            let s = read_cache(path)?;
            let renamed = TimeSeries::with_frequency(station_id.clone(), s.timestamps().to_vec(), s.values().to_vec(), s.frequency_seconds())?;
            (renamed, false)
        }
        StationSource::Synthetic { station_id, length, seed } => (synthetic_station(station_id, *length, *seed)?, true),
    };
    let clean = impute_forward_backward(&series)?;
    let (train, val, test) = split_chronological(&clean, &cfg.split)?;
    Ok(PreparedStation {
        station_id: source.station_id().to_string(),
        synthetic,
        train,
        val,
        test,
    })
}

/// Loads the checkpoint named in the config or trains on a fresh GP corpus.
pub fn pretrained_model(cfg: &RunConfig) -> Result<(ForecastModel, f64)> {
    let p = &cfg.pretrain;
    let start = Instant::now();
    let model = match &p.checkpoint {
        Some(path) => ForecastModel::load(path)?,
        None => {
            let corpus = gen_corpus(p.corpus_series, p.corpus_length, p.corpus_seed)?;
            ForecastModel::train(&corpus, p.model.clone(), p.tokenizer)?.0
        }
    };
    Ok((model, start.elapsed().as_secs_f64()))
}

fn build_forecaster(spec: &ModelSpec, cfg: &RunConfig, station: &PreparedStation, station_idx: usize, pretrained: Option<&ForecastModel>) -> Result<Box<dyn Forecaster>> {
    let clamp = cfg.clamp_nonnegative.unwrap_or(!station.synthetic);
    let neural = |steps: usize| -> Result<Box<dyn Forecaster>> {
        let mut model = pretrained.cloned().ok_or_else(|| Error::Config("sequence model not available".into()))?;
        model.clamp_nonnegative = clamp;
        Ok(Box::new(SequenceForecaster {
            name: spec.name(),
            model,
            fine_tune_steps: steps,
            seed: derive_seed(cfg.seed, 1_000 + station_idx as u64),
        }))
    };
    Ok(match *spec {
        ModelSpec::SeasonalNaive { season } => Box::new(SeasonalNaive { season }),
        ModelSpec::Npts { alpha } => Box::new(Npts { alpha }),
        ModelSpec::Theta => Box::new(Theta),
        ModelSpec::Ses => Box::new(ExpSmoothing { variant: SmoothingVariant::Simple }),
        ModelSpec::Holt => Box::new(ExpSmoothing { variant: SmoothingVariant::Holt }),
        ModelSpec::ZeroShot => neural(0)?,
        ModelSpec::FineTuned { steps } => neural(steps)?,
        ModelSpec::Markov { order } => Box::new(MarkovForecaster::new(order, cfg.pretrain.tokenizer.build()?, cfg.context_length, clamp)),
    })
}

/// Fits every roster model on every station's train split and scores all
/// (horizon, window) cells on the test split. Failures are recorded per cell.
pub fn run_experiment(cfg: &RunConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let mut report = EvalReport::default();
    let stations = cfg.stations.iter().map(|s| prepare_station(s, cfg)).collect::<Result<Vec<_>>>()?;
    let pretrained = if cfg.models.iter().any(ModelSpec::needs_pretraining) {
        let (m, secs) = pretrained_model(cfg)?;
        report.pretrain_seconds = Some(secs);
        Some(m)
    } else {
        None
    };

    for (si, station) in stations.iter().enumerate() {
        for spec in &cfg.models {
            let name = spec.name();
            let fail = |horizon, e: Error| CellFailure {
                station: station.station_id.clone(),
                model: name.clone(),
                horizon,
                error: e.to_string(),
            };
            let start = Instant::now();
            let fitted = build_forecaster(spec, cfg, station, si, pretrained.as_ref()).and_then(|mut f| f.fit(&station.train).map(|_| f));
            let fit_seconds = start.elapsed().as_secs_f64();
            let forecaster = match fitted {
                Ok(f) => f,
                Err(e) => {
                    report.failures.push(fail(None, e));
                    continue;
                }
            };
            let mut predict_seconds = 0.0;
            let mut windows = 0;
            for &h in &cfg.horizons {
                let cell_seed = derive_seed(derive_seed(cfg.seed, si as u64), h as u64);
                let start = Instant::now();
                let result = backtest(forecaster.as_ref(), &station.test, cfg.context_length, h, cfg.n_windows, cfg.n_samples, cell_seed);
                predict_seconds += start.elapsed().as_secs_f64();
                match result {
                    Ok(rows) => {
                        windows += rows.len();
                        report.rows.extend(rows.into_iter().map(|(r, _)| r));
                    }
                    Err(e) => report.failures.push(fail(Some(h), e)),
                }
            }
            report.timings.push(Timing {
                station: station.station_id.clone(),
                model: name.clone(),
                fit_seconds,
                predict_seconds,
                windows,
            });
        }
    }
    if report.rows.is_empty() {
        let first = report.failures.first().map(|f| f.error.clone()).unwrap_or_default();
        return Err(Error::RunFailed(format!("no cell produced a forecast; first failure: {first}")));
    }
    report.warnings = super::ranking::degradation_warnings(&super::ranking::summarize(&report.rows));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origins_are_even_and_distinct() {
        assert_eq!(window_origins(20, 5, 3, 3).unwrap(), vec![5, 11, 17]);
        assert_eq!(window_origins(20, 5, 3, 1).unwrap(), vec![17]);
        assert_eq!(window_origins(8, 5, 3, 1).unwrap(), vec![5]);
        assert!(matches!(window_origins(7, 5, 3, 1), Err(Error::TooShort(_))));
        assert!(matches!(window_origins(10, 5, 3, 4), Err(Error::TooShort(_))));
    }

    #[test]
    fn persistence_window_mase_matches_hand_value() {
        // context 10 points, then a 10-point target; persistence forecasts y[9] throughout
        let y: Vec<f64> = vec![1.0, 2.0, 1.5, 3.0, 2.5, 2.0, 4.0, 3.5, 3.0, 5.0, 4.0, 4.5, 6.0, 5.5, 5.0, 7.0, 6.5, 6.0, 8.0, 7.5];
        let s = TimeSeries::regular("s", 0, 3600, &y).unwrap();
        let rows = backtest(&SeasonalNaive { season: 1 }, &s, 10, 10, 1, 1, 0).unwrap();
        let target = &y[10..];
        let numer: f64 = target.iter().map(|v| (v - 5.0).abs()).sum::<f64>() / 10.0;
        let denom: f64 = target.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / 9.0;
        assert!((rows[0].0.report.mase - numer / denom).abs() < 1e-12);
    }

    #[test]
    fn periodic_series_is_exact_for_seasonal_naive() {
        let y: Vec<f64> = (0..400).map(|t| 1.0 + 0.5 * ((t % 24) as f64 / 24.0)).collect();
        let s = TimeSeries::regular("s", 0, 3600, &y).unwrap();
        for (row, _) in backtest(&SeasonalNaive::default(), &s, 48, 24, 5, 3, 0).unwrap() {
            assert_eq!(row.report.mae, 0.0);
            assert_eq!(row.report.mase, 0.0);
            assert!(row.context_end < row.origin);
        }
    }
}
