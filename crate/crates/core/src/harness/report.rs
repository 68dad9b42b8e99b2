//! Report files of an evaluation run and the plot data derived from them.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::backtest::{EvalReport, EvalRow};
use super::config::RunConfig;
use super::ranking::{rank_models, summarize, Ranking, SummaryRow};
use crate::data_io::cache::format_timestamp;
use crate::error::{Error, Result};
use crate::metrics::{write_metric_rows, Metric, MetricFlag, MetricReport, MetricRow};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const RANKS_FILE: &str = "ranks.csv";
pub const RANKS_BY_HORIZON_FILE: &str = "ranks_by_horizon.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const TIMINGS_BY_STATION_FILE: &str = "timings_by_station.csv";
pub const FAILURES_FILE: &str = "failures.csv";
pub const WARNINGS_FILE: &str = "warnings.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLOT_DIR: &str = "plotdata";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Observed against predicted, one file per model.
    Scatter,
    /// True and predicted series at the smallest horizon.
    Overlay,
    /// Mean metric per horizon and model.
    Horizon,
}

impl Figure {
    pub const ALL: [Figure; 3] = [Figure::Scatter, Figure::Overlay, Figure::Horizon];
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: RunConfig,
    pub rows: usize,
    pub failures: usize,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn sign(negate: bool) -> f64 {
    if negate {
        -1.0
    } else {
        1.0
    }
}

/// Writes every report file and all plot data into `dir`.
pub fn emit_reports(report: &EvalReport, cfg: &RunConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let negate = cfg.negate_scores;

    let mut rows: Vec<&EvalRow> = report.rows.iter().collect();
    rows.sort_by(|a, b| (&a.station, &a.model, a.horizon, a.origin).cmp(&(&b.station, &b.model, b.horizon, b.origin)));
    let metric_rows: Vec<MetricRow> = rows
        .iter()
        .map(|r| MetricRow {
            station: r.station.clone(),
            model: r.model.clone(),
            horizon: r.horizon,
            origin: r.origin,
            report: r.report.clone(),
        })
        .collect();
    let path = dir.join(METRICS_FILE);
    write_metric_rows(create(&path)?, &metric_rows, negate)?;

    let path = dir.join(PREDICTIONS_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["station", "model", "horizon", "origin", "step", "timestamp_utc", "actual", "point"])?;
    for r in &rows {
        for (k, ((&t, a), p)) in r.target_timestamps.iter().zip(&r.actual).zip(&r.point).enumerate() {
            w.write_record([
                r.station.clone(),
                r.model.clone(),
                r.horizon.to_string(),
                r.origin.to_string(),
                (k + 1).to_string(),
                format_timestamp(t),
                a.to_string(),
                p.to_string(),
            ])?;
        }
    }
    finish(w, &path)?;

    let summary = summarize(&report.rows);
    write_summary(&dir.join(SUMMARY_FILE), &summary, negate)?;
    write_ranks(dir, &rank_models(&summary), negate)?;
    write_timings(dir, report)?;

    let path = dir.join(FAILURES_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["station", "model", "horizon", "error"])?;
    for f in &report.failures {
        w.write_record([f.station.clone(), f.model.clone(), f.horizon.map(|h| h.to_string()).unwrap_or_default(), f.error.clone()])?;
    }
    finish(w, &path)?;

    let path = dir.join(WARNINGS_FILE);
    let mut text = report.warnings.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        rows: report.rows.len(),
        failures: report.failures.len(),
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;

    for fig in Figure::ALL {
        write_plotdata(dir, fig)?;
    }
    Ok(())
}

fn summary_header(negate: bool) -> Vec<String> {
    let mut h = vec!["station".to_string(), "model".into(), "horizon".into(), "windows".into()];
    h.extend(Metric::ALL.iter().map(|m| m.header(negate)));
    h.push("flags".into());
    h
}

pub fn write_summary(path: &Path, summary: &[SummaryRow], negate: bool) -> Result<()> {
    let s = sign(negate);
    let mut w = csv_writer(path)?;
    w.write_record(summary_header(negate))?;
    for r in summary {
        let mut rec = vec![r.station.clone(), r.model.clone(), r.horizon.to_string(), r.windows.to_string()];
        rec.extend(Metric::ALL.iter().map(|&m| (s * r.report.get(m)).to_string()));
        rec.push(r.report.flags_string());
        w.write_record(rec)?;
    }
    finish(w, path)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_reader(File::open(path).map_err(|e| Error::io(path, e))?);
    let headers = r.headers()?.clone();
    if headers.len() != 10 || headers.iter().take(4).ne(["station", "model", "horizon", "windows"]) {
        return Err(Error::Format(format!("unexpected summary header {headers:?}")));
    }
    let columns = headers.iter().skip(4).take(5).map(Metric::from_header).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |msg: String| Error::Row { line: i + 2, msg };
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(format!("bad number {:?}", &rec[k])));
        let mut v = [0.0; 5];
        for (k, &(metric, negated)) in columns.iter().enumerate() {
            let idx = Metric::ALL.iter().position(|&m| m == metric).unwrap();
            v[idx] = sign(negated) * num(4 + k)?;
        }
        let flags = rec[9].split('|').filter(|f| !f.is_empty()).map(str::parse::<MetricFlag>).collect::<Result<_>>()?;
        out.push(SummaryRow {
            station: rec[0].to_string(),
            model: rec[1].to_string(),
            horizon: rec[2].parse().map_err(|_| bad("bad horizon".into()))?,
            windows: rec[3].parse().map_err(|_| bad("bad window count".into()))?,
            report: MetricReport {
                mae: v[0],
                rmse: v[1],
                smape: v[2],
                rmsle: v[3],
                mase: v[4],
                flags,
            },
        });
    }
    Ok(out)
}

/// Writes `ranks.csv` (model × metric mean ranks) and `ranks_by_horizon.csv`.
pub fn write_ranks(dir: &Path, ranking: &Ranking, negate: bool) -> Result<()> {
    let path = dir.join(RANKS_FILE);
    let mut w = csv_writer(&path)?;
    let mut header = vec!["model".to_string()];
    header.extend(Metric::RANK_ORDER.iter().map(|m| m.header(negate)));
    w.write_record(&header)?;
    for (model, ranks) in &ranking.overall {
        let mut rec = vec![model.clone()];
        rec.extend(ranks.iter().map(|r| format!("{r:.3}")));
        w.write_record(rec)?;
    }
    finish(w, &path)?;

    let path = dir.join(RANKS_BY_HORIZON_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["metric", "horizon", "model", "score", "rank"])?;
    for r in &ranking.by_horizon {
        w.write_record([r.metric.header(negate), r.horizon.to_string(), r.model.clone(), (sign(negate) * r.score).to_string(), r.rank.to_string()])?;
    }
    finish(w, &path)
}

fn write_timings(dir: &Path, report: &EvalReport) -> Result<()> {
    let path = dir.join(TIMINGS_BY_STATION_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["station", "model", "training_time", "prediction_time", "prediction_time_per_window", "windows"])?;
    let mut totals: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for t in &report.timings {
        let per_window = if t.windows > 0 { t.predict_seconds / t.windows as f64 } else { 0.0 };
        w.write_record([
            t.station.clone(),
            t.model.clone(),
            format!("{:.3}", t.fit_seconds),
            format!("{:.3}", t.predict_seconds),
            format!("{per_window:.6}"),
            t.windows.to_string(),
        ])?;
        let e = totals.entry(&t.model).or_default();
        e.0 += t.fit_seconds;
        e.1 += t.predict_seconds;
    }
    finish(w, &path)?;

    let path = dir.join(TIMINGS_FILE);
    let mut w = csv_writer(&path)?;
    w.write_record(["model", "training_time", "prediction_time"])?;
    for (model, (fit, predict)) in totals {
        // the shared pretraining counts towards both sequence-model entries
        let shared = match model {
            "ZeroShot" | "FineTuned" => report.pretrain_seconds.unwrap_or(0.0),
            _ => 0.0,
        };
        w.write_record([model.to_string(), format!("{:.3}", fit + shared), format!("{predict:.3}")])?;
    }
    finish(w, &path)
}

struct Prediction {
    station: String,
    model: String,
    horizon: usize,
    origin: i64,
    step: usize,
    timestamp: String,
    actual: String,
    point: String,
}

fn read_predictions(dir: &Path) -> Result<Vec<Prediction>> {
    let path = dir.join(PREDICTIONS_FILE);
    let mut r = csv::Reader::from_reader(File::open(&path).map_err(|e| Error::io(&path, e))?);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Row {
            line: i + 2,
            msg: "malformed prediction row".into(),
        };
        if rec.len() != 8 {
            return Err(bad());
        }
        out.push(Prediction {
            station: rec[0].to_string(),
            model: rec[1].to_string(),
            horizon: rec[2].parse().map_err(|_| bad())?,
            origin: rec[3].parse().map_err(|_| bad())?,
            step: rec[4].parse().map_err(|_| bad())?,
            timestamp: rec[5].to_string(),
            actual: rec[6].to_string(),
            point: rec[7].to_string(),
        });
    }
    Ok(out)
}

fn file_safe(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Regenerates one figure's CSV files under `dir/plotdata` from the report
/// files already in `dir`.
pub fn write_plotdata(dir: &Path, figure: Figure) -> Result<()> {
    let out = dir.join(PLOT_DIR);
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    match figure {
        Figure::Scatter => {
            let preds = read_predictions(dir)?;
            let mut by_model: BTreeMap<&str, Vec<&Prediction>> = BTreeMap::new();
            for p in &preds {
                by_model.entry(&p.model).or_default().push(p);
            }
            for (model, ps) in by_model {
                let path = out.join(format!("scatter_{}.csv", file_safe(model)));
                let mut w = csv_writer(&path)?;
                w.write_record(["station", "horizon", "step", "observed", "predicted"])?;
                for p in ps {
                    w.write_record([p.station.as_str(), &p.horizon.to_string(), &p.step.to_string(), &p.actual, &p.point])?;
                }
                finish(w, &path)?;
            }
        }
        Figure::Overlay => {
            let preds = read_predictions(dir)?;
            let Some(h) = preds.iter().map(|p| p.horizon).min() else {
                return Err(Error::Format("no predictions to plot".into()));
            };
            let path = out.join("overlay.csv");
            let mut w = csv_writer(&path)?;
            w.write_record(["station", "timestamp_utc", "series", "value"])?;
            let mut selected: Vec<&Prediction> = preds.iter().filter(|p| p.horizon == h).collect();
            selected.sort_by(|a, b| (&a.station, a.origin, a.step, &a.model).cmp(&(&b.station, b.origin, b.step, &b.model)));
            let mut last_truth: Option<(&str, i64, usize)> = None;
            for p in selected {
                let key = (p.station.as_str(), p.origin, p.step);
                if last_truth != Some(key) {
                    w.write_record([p.station.as_str(), &p.timestamp, "observed", &p.actual])?;
                    last_truth = Some(key);
                }
                w.write_record([p.station.as_str(), &p.timestamp, &p.model, &p.point])?;
            }
            finish(w, &path)?;
        }
        Figure::Horizon => {
            let summary = read_summary(&dir.join(SUMMARY_FILE))?;
            let mut cells: BTreeMap<(&str, usize), Vec<&MetricReport>> = BTreeMap::new();
            for s in &summary {
                cells.entry((&s.model, s.horizon)).or_default().push(&s.report);
            }
            let path = out.join("horizon.csv");
            let mut w = csv_writer(&path)?;
            let mut header = vec!["model".to_string(), "horizon".into()];
            header.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
            w.write_record(&header)?;
            for ((model, h), reports) in cells {
                let mut rec = vec![model.to_string(), h.to_string()];
                for m in Metric::ALL {
                    let v: Vec<f64> = reports.iter().map(|r| r.get(m)).filter(|x| x.is_finite()).collect();
                    let mean = if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
                    rec.push(mean.to_string());
                }
                w.write_record(rec)?;
            }
            finish(w, &path)?;
        }
    }
    Ok(())
}
