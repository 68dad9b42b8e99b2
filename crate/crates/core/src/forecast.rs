//! Probabilistic forecast container and the interface shared by every model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TokenModel;
use crate::series::TimeSeries;
use crate::tokenizer::{Tokenizer, TokenSequence};

pub const DEFAULT_LEVELS: [f64; 3] = [0.1, 0.5, 0.9];

/// Sample paths in value space plus per-step summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub sample_paths: Vec<Vec<f64>>,
    /// Per-step median of the paths (lower middle value for even counts).
    pub point: Vec<f64>,
    /// `(level, per-step quantile)` pairs in increasing level order.
    pub quantiles: Vec<(f64, Vec<f64>)>,
}

/// Empirical quantile of sorted data: the smallest value whose ECDF reaches `q`.
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let k = (q * n as f64).ceil() as usize;
    sorted[k.clamp(1, n) - 1]
}

impl Forecast {
    pub fn from_paths(sample_paths: Vec<Vec<f64>>, levels: &[f64]) -> Result<Self> {
        let Some(h) = sample_paths.first().map(Vec::len) else {
            return Err(Error::Shape("forecast needs at least one sample path".into()));
        };
        if h == 0 || sample_paths.iter().any(|p| p.len() != h) {
            return Err(Error::Shape("sample paths must share a positive length".into()));
        }
        if let Some(&bad) = sample_paths.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        if levels.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(Error::Config(format!("quantile levels must lie in (0, 1): {levels:?}")));
        }
        let mut levels = levels.to_vec();
        levels.sort_by(f64::total_cmp);
        levels.dedup();

        let mut quantiles: Vec<(f64, Vec<f64>)> = levels.iter().map(|&q| (q, Vec::with_capacity(h))).collect();
        let mut point = Vec::with_capacity(h);
        let mut column = Vec::with_capacity(sample_paths.len());
        for t in 0..h {
            column.clear();
            column.extend(sample_paths.iter().map(|p| p[t]));
            column.sort_by(f64::total_cmp);
            point.push(empirical_quantile(&column, 0.5));
            for (q, series) in &mut quantiles {
                series.push(empirical_quantile(&column, *q));
            }
        }
        Ok(Self {
            sample_paths,
            point,
            quantiles,
        })
    }

    /// `n` copies of a single point path.
    pub fn deterministic(point: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("sample count must be positive".into()));
        }
        Self::from_paths(vec![point; n], &DEFAULT_LEVELS)
    }

    pub fn horizon(&self) -> usize {
        self.point.len()
    }

    pub fn n_samples(&self) -> usize {
        self.sample_paths.len()
    }

    pub fn quantile(&self, level: f64) -> Option<&[f64]> {
        self.quantiles.iter().find(|(q, _)| *q == level).map(|(_, v)| v.as_slice())
    }
}

/// Common interface for the sequence model and the classical baselines.
pub trait Forecaster {
    fn name(&self) -> &str;

    /// Adapts to a station's training split. Stateless methods ignore it.
    fn fit(&mut self, _train: &TimeSeries) -> Result<()> {
        Ok(())
    }

    fn predict(&self, context: &[f64], horizon: usize, n_samples: usize, seed: u64) -> Result<Forecast>;
}

/// Encodes the last `max_context` values (scale fitted on exactly those),
/// samples token paths, and maps them back to value space.
#[allow(clippy::too_many_arguments)]
pub fn forecast_with_tokens<M: TokenModel + ?Sized>(
    model: &M,
    tokenizer: &Tokenizer,
    context: &[f64],
    max_context: usize,
    horizon: usize,
    n_samples: usize,
    seed: u64,
    clamp_nonnegative: bool,
) -> Result<Forecast> {
    if context.is_empty() {
        return Err(Error::EmptyContext);
    }
    let used = &context[context.len().saturating_sub(max_context.max(1))..];
    let encoded = tokenizer.encode(used)?;
    let paths = model.sample_paths(&encoded.ids, horizon, n_samples, seed)?;
    let values = paths
        .into_iter()
        .map(|ids| {
            let mut v = tokenizer.decode(&TokenSequence {
                ids,
                scaler: encoded.scaler,
            })?;
            if clamp_nonnegative {
                v.iter_mut().for_each(|x| *x = x.max(0.0));
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    Forecast::from_paths(values, &DEFAULT_LEVELS)
}
