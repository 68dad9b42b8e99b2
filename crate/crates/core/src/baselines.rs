//! Classical comparison forecasters: seasonal naive, NPTS, Theta and
//! exponential smoothing (simple and Holt linear trend).

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::forecast::{Forecast, Forecaster, DEFAULT_LEVELS};

pub const DEFAULT_SEASON: usize = 24;
pub const DEFAULT_NPTS_ALPHA: f64 = 0.1;

/// Smoothing grid `0.01, 0.02, ..., 0.99`.
pub fn smoothing_grid() -> impl Iterator<Item = f64> + Clone {
    (1..=99).map(|k| k as f64 / 100.0)
}

fn check_len(context: &[f64], min: usize, what: &str) -> Result<()> {
    if context.len() < min {
        return Err(Error::TooShort(format!("{what} needs at least {min} observations, got {}", context.len())));
    }
    if let Some(&bad) = context.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(bad));
    }
    Ok(())
}

fn check_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be positive".into()));
    }
    Ok(())
}

/// Repeats the last observed value of the same seasonal phase.
pub fn seasonal_naive(context: &[f64], horizon: usize, season: usize) -> Result<Vec<f64>> {
    if season == 0 {
        return Err(Error::Config("season length must be positive".into()));
    }
    check_horizon(horizon)?;
    check_len(context, season, "seasonal naive")?;
    let last = context.len() - 1;
    Ok((1..=horizon).map(|h| context[last + h - season * h.div_ceil(season)]).collect())
}

/// Each step independently draws a past value with weight
/// `exp(-alpha * age)`, age 0 being the last observation.
pub fn npts(context: &[f64], horizon: usize, n_samples: usize, alpha: f64, seed: u64) -> Result<Forecast> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::Config(format!("NPTS decay must be positive, got {alpha}")));
    }
    check_horizon(horizon)?;
    check_len(context, 1, "NPTS")?;
    let n = context.len();
    let weights: Vec<f64> = (0..n).map(|i| (-alpha * (n - 1 - i) as f64).exp()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::Numerical(format!("NPTS weights: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let paths = (0..n_samples)
        .map(|_| (0..horizon).map(|_| context[dist.sample(&mut rng)]).collect())
        .collect();
    Forecast::from_paths(paths, &DEFAULT_LEVELS)
}

/// One-step in-sample SSE and final level of simple exponential smoothing
/// started at the first observation.
pub fn ses_run(y: &[f64], alpha: f64) -> (f64, f64) {
    let mut level = y[0];
    let mut sse = 0.0;
    for &v in &y[1..] {
        let e = v - level;
        sse += e * e;
        level += alpha * e;
    }
    (sse, level)
}

/// Grid value with the smallest SSE; the first one wins ties.
fn best_alpha(y: &[f64]) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for a in smoothing_grid() {
        let (sse, _) = ses_run(y, a);
        if sse < best.0 {
            best = (sse, a);
        }
    }
    best.1
}

/// Least-squares line `a + b * t` over `t = 0..n`.
pub fn linear_fit(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, v) in y.iter().enumerate() {
        let dt = t as f64 - t_mean;
        sxy += dt * (v - y_mean);
        sxx += dt * dt;
    }
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (y_mean - b * t_mean, b)
}

/// Theta(2): the mean of the extrapolated regression line and the flat SES
/// forecast of the theta line `2y - fit`.
pub fn theta_forecast(context: &[f64], horizon: usize) -> Result<Vec<f64>> {
    check_horizon(horizon)?;
    check_len(context, 3, "Theta")?;
    let (a, b) = linear_fit(context);
    let theta_line: Vec<f64> = context.iter().enumerate().map(|(t, v)| 2.0 * v - (a + b * t as f64)).collect();
    let (_, level) = ses_run(&theta_line, best_alpha(&theta_line));
    let last = (context.len() - 1) as f64;
    Ok((1..=horizon).map(|h| 0.5 * (a + b * (last + h as f64)) + 0.5 * level).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothingVariant {
    Simple,
    Holt,
}

/// One-step SSE and final `(level, trend)` of Holt's linear method started
/// at `l = y0`, `b = y1 - y0`.
pub fn holt_run(y: &[f64], alpha: f64, beta: f64) -> (f64, f64, f64) {
    let mut level = y[0];
    let mut trend = y[1] - y[0];
    let mut sse = 0.0;
    for &v in &y[1..] {
        let pred = level + trend;
        sse += (v - pred) * (v - pred);
        let new_level = alpha * v + (1.0 - alpha) * pred;
        trend = beta * (new_level - level) + (1.0 - beta) * trend;
        level = new_level;
    }
    (sse, level, trend)
}

/// SES or Holt with parameters chosen on the grid by in-sample one-step SSE.
/// `alpha` overrides the search for the simple variant.
pub fn exp_smoothing(context: &[f64], horizon: usize, variant: SmoothingVariant, alpha: Option<f64>) -> Result<Vec<f64>> {
    check_horizon(horizon)?;
    check_len(context, 2, "exponential smoothing")?;
    match variant {
        SmoothingVariant::Simple => {
            let alpha = match alpha {
                Some(a) if a > 0.0 && a <= 1.0 => a,
                Some(a) => return Err(Error::Config(format!("alpha must lie in (0, 1], got {a}"))),
                None => best_alpha(context),
            };
            let (_, level) = ses_run(context, alpha);
            Ok(vec![level; horizon])
        }
        SmoothingVariant::Holt => {
            let mut best = (f64::INFINITY, 0.0, 0.0);
            for a in smoothing_grid() {
                for b in smoothing_grid() {
                    let (sse, level, trend) = holt_run(context, a, b);
                    if sse < best.0 {
                        best = (sse, level, trend);
                    }
                }
            }
            let (_, level, trend) = best;
            Ok((1..=horizon).map(|h| level + trend * h as f64).collect())
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeasonalNaive {
    pub season: usize,
}

impl Default for SeasonalNaive {
    fn default() -> Self {
        Self { season: DEFAULT_SEASON }
    }
}

impl Forecaster for SeasonalNaive {
    fn name(&self) -> &str {
        "SeasonalNaive"
    }

    fn predict(&self, context: &[f64], horizon: usize, n_samples: usize, _seed: u64) -> Result<Forecast> {
        Forecast::deterministic(seasonal_naive(context, horizon, self.season)?, n_samples)
    }
}

#[derive(Debug, Clone)]
pub struct Npts {
    pub alpha: f64,
}

impl Default for Npts {
    fn default() -> Self {
        Self { alpha: DEFAULT_NPTS_ALPHA }
    }
}

impl Forecaster for Npts {
    fn name(&self) -> &str {
        "NPTS"
    }

    fn predict(&self, context: &[f64], horizon: usize, n_samples: usize, seed: u64) -> Result<Forecast> {
        npts(context, horizon, n_samples, self.alpha, seed)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Theta;

impl Forecaster for Theta {
    fn name(&self) -> &str {
        "Theta"
    }

    fn predict(&self, context: &[f64], horizon: usize, n_samples: usize, _seed: u64) -> Result<Forecast> {
        Forecast::deterministic(theta_forecast(context, horizon)?, n_samples)
    }
}

#[derive(Debug, Clone)]
pub struct ExpSmoothing {
    pub variant: SmoothingVariant,
}

impl Forecaster for ExpSmoothing {
    fn name(&self) -> &str {
        match self.variant {
            SmoothingVariant::Simple => "SES",
            SmoothingVariant::Holt => "Holt",
        }
    }

    fn predict(&self, context: &[f64], horizon: usize, n_samples: usize, _seed: u64) -> Result<Forecast> {
        Forecast::deterministic(exp_smoothing(context, horizon, self.variant, None)?, n_samples)
    }
}
