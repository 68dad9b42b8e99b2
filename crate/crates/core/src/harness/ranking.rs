use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::backtest::EvalRow;
use crate::metrics::{metric_suite, Metric, MetricFlag, MetricReport};

/// Aggregate of one (station, model, horizon) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub station: String,
    pub model: String,
    pub horizon: usize,
    pub windows: usize,
    pub report: MetricReport,
}

/// Per metric: mean of the finite per-window values. A metric with no finite
/// window value (MASE on single-step windows) falls back to the pooled value
/// over all the cell's actual/point pairs in origin order.
pub fn summarize(rows: &[EvalRow]) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(&str, &str, usize), Vec<&EvalRow>> = BTreeMap::new();
    for r in rows {
        cells.entry((&r.station, &r.model, r.horizon)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((station, model, horizon), mut group)| {
            group.sort_by_key(|r| r.origin);
            let mut flags: BTreeSet<MetricFlag> = group.iter().flat_map(|r| r.report.flags.iter().copied()).collect();
            let mut pooled: Option<Option<MetricReport>> = None;
            let mut value = |m: Metric| {
                let finite: Vec<f64> = group.iter().map(|r| r.report.get(m)).filter(|v| v.is_finite()).collect();
                if !finite.is_empty() {
                    return finite.iter().sum::<f64>() / finite.len() as f64;
                }
                let p = pooled.get_or_insert_with(|| {
                    let y: Vec<f64> = group.iter().flat_map(|r| r.actual.iter().copied()).collect();
                    let y_hat: Vec<f64> = group.iter().flat_map(|r| r.point.iter().copied()).collect();
                    metric_suite(&y, &y_hat).ok()
                });
                p.as_ref().map_or(f64::NAN, |p| p.get(m))
            };
            let report = MetricReport {
                mae: value(Metric::Mae),
                rmse: value(Metric::Rmse),
                smape: value(Metric::Smape),
                rmsle: value(Metric::Rmsle),
                mase: value(Metric::Mase),
                flags: BTreeSet::new(),
            };
            if report.mase.is_finite() {
                flags.remove(&MetricFlag::MaseUndefined);
            }
            SummaryRow {
                station: station.to_string(),
                model: model.to_string(),
                horizon,
                windows: group.len(),
                report: MetricReport { flags, ..report },
            }
        })
        .collect()
}

/// Ranks ascending scores from 1; tied scores share the mean of their ranks.
pub fn rank_with_ties(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = shared;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRank {
    pub metric: Metric,
    pub horizon: usize,
    pub model: String,
    /// Mean of the summary metric across stations.
    pub score: f64,
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ranking {
    pub by_horizon: Vec<HorizonRank>,
    /// Model, then mean rank across horizons per metric in `Metric::RANK_ORDER`.
    pub overall: Vec<(String, [f64; 5])>,
}

/// For each (metric, horizon), models with a finite score on every station
/// are ranked by their cross-station mean. Overall ranks average those over
/// the horizons where the model was ranked.
pub fn rank_models(summary: &[SummaryRow]) -> Ranking {
    let stations: BTreeSet<&str> = summary.iter().map(|s| s.station.as_str()).collect();
    let models: BTreeSet<&str> = summary.iter().map(|s| s.model.as_str()).collect();
    let horizons: BTreeSet<usize> = summary.iter().map(|s| s.horizon).collect();
    let mut lookup: BTreeMap<(&str, &str, usize), &MetricReport> = BTreeMap::new();
    for s in summary {
        lookup.insert((&s.model, &s.station, s.horizon), &s.report);
    }

    let mut by_horizon = Vec::new();
    let mut per_model: BTreeMap<&str, [Vec<f64>; 5]> = BTreeMap::new();
    for (mi, &metric) in Metric::RANK_ORDER.iter().enumerate() {
        for &h in &horizons {
            let mut entrants = Vec::new();
            for &model in &models {
                let vals: Option<Vec<f64>> = stations
                    .iter()
                    .map(|&st| lookup.get(&(model, st, h)).map(|r| r.get(metric)).filter(|v| v.is_finite()))
                    .collect();
                if let Some(v) = vals {
                    entrants.push((model, v.iter().sum::<f64>() / v.len() as f64));
                }
            }
            let ranks = rank_with_ties(&entrants.iter().map(|e| e.1).collect::<Vec<_>>());
            for ((model, score), rank) in entrants.into_iter().zip(ranks) {
                per_model.entry(model).or_default()[mi].push(rank);
                by_horizon.push(HorizonRank {
                    metric,
                    horizon: h,
                    model: model.to_string(),
                    score,
                    rank,
                });
            }
        }
    }
    let overall = models
        .iter()
        .map(|&m| {
            let mut avg = [f64::NAN; 5];
            if let Some(lists) = per_model.get(m) {
                for (a, l) in avg.iter_mut().zip(lists) {
                    if !l.is_empty() {
                        *a = l.iter().sum::<f64>() / l.len() as f64;
                    }
                }
            }
            (m.to_string(), avg)
        })
        .collect();
    Ranking { by_horizon, overall }
}

/// Forecast error should not shrink with horizon. Returns one warning per
/// model whose cross-station mean MASE at its largest horizon is below the
/// value at its smallest horizon.
pub fn degradation_warnings(summary: &[SummaryRow]) -> Vec<String> {
    let mut cells: BTreeMap<&str, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for s in summary {
        if s.report.mase.is_finite() {
            cells.entry(&s.model).or_default().entry(s.horizon).or_default().push(s.report.mase);
        }
    }
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    let mut out = Vec::new();
    for (model, by_h) in cells {
        let (Some((&h0, v0)), Some((&h1, v1))) = (by_h.first_key_value(), by_h.last_key_value()) else {
            continue;
        };
        let (m0, m1) = (mean(v0), mean(v1));
        if h1 > h0 && m1 < m0 {
            out.push(format!("{model}: mean MASE {m1:.4} at horizon {h1} is below {m0:.4} at horizon {h0}"));
        }
    }
    out
}
