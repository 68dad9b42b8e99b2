//! Point-forecast error metrics: MAE, RMSE, SMAPE, RMSLE and MASE.
//!
//! SMAPE is a fraction, not a percentage. MASE divides by the mean absolute
//! one-step change of the actuals inside the same evaluation window.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Replacement for predictions at or below -1 before taking `ln(1 + x)`.
pub const RMSLE_FLOOR: f64 = -1.0 + 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricFlag {
    SmapeZeroTerms,
    MaseUndefined,
    RmsleClamped,
}

impl MetricFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricFlag::SmapeZeroTerms => "SMAPE_ZERO_TERMS",
            MetricFlag::MaseUndefined => "MASE_UNDEFINED",
            MetricFlag::RmsleClamped => "RMSLE_CLAMPED",
        }
    }
}

impl FromStr for MetricFlag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SMAPE_ZERO_TERMS" => Ok(MetricFlag::SmapeZeroTerms),
            "MASE_UNDEFINED" => Ok(MetricFlag::MaseUndefined),
            "RMSLE_CLAMPED" => Ok(MetricFlag::RmsleClamped),
            other => Err(Error::Format(format!("unknown metric flag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    Mae,
    Rmse,
    Smape,
    Rmsle,
    Mase,
}

impl Metric {
    /// Report column order.
    pub const ALL: [Metric; 5] = [Metric::Mae, Metric::Rmse, Metric::Smape, Metric::Rmsle, Metric::Mase];
    /// Alphabetical order used by the rank table.
    pub const RANK_ORDER: [Metric; 5] = [Metric::Mae, Metric::Mase, Metric::Rmse, Metric::Rmsle, Metric::Smape];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mae => "MAE",
            Metric::Rmse => "RMSE",
            Metric::Smape => "SMAPE",
            Metric::Rmsle => "RMSLE",
            Metric::Mase => "MASE",
        }
    }

    /// Column header, `-MAE` style when scores are negated.
    pub fn header(self, negate: bool) -> String {
        if negate {
            format!("-{}", self.name())
        } else {
            self.name().to_string()
        }
    }

    pub fn from_header(s: &str) -> Result<(Metric, bool)> {
        let (negated, name) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let metric = Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Format(format!("unknown metric column {s:?}")))?;
        Ok((metric, negated))
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn check_pair(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::Shape(format!("{} actuals but {} predictions", y.len(), y_hat.len())));
    }
    if y.is_empty() {
        return Err(Error::TooShort("metrics need at least one point".into()));
    }
    if let Some(&bad) = y.iter().chain(y_hat).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(bad));
    }
    Ok(())
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, p)| (a - p).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check_pair(y, y_hat)?;
    Ok((y.iter().zip(y_hat).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / y.len() as f64).sqrt())
}

/// SMAPE and whether any term had `|y| + |y_hat| = 0` (counted as 0).
pub fn smape_flagged(y: &[f64], y_hat: &[f64]) -> Result<(f64, bool)> {
    check_pair(y, y_hat)?;
    let mut zero_terms = false;
    let total: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, p)| {
            let denom = (a.abs() + p.abs()) / 2.0;
            if denom == 0.0 {
                zero_terms = true;
                0.0
            } else {
                (a - p).abs() / denom
            }
        })
        .sum();
    Ok((total / y.len() as f64, zero_terms))
}

pub fn smape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    smape_flagged(y, y_hat).map(|r| r.0)
}

/// RMSLE and whether any prediction was raised to [`RMSLE_FLOOR`].
pub fn rmsle_flagged(y: &[f64], y_hat: &[f64]) -> Result<(f64, bool)> {
    check_pair(y, y_hat)?;
    if let Some(&bad) = y.iter().find(|&&a| a <= -1.0) {
        return Err(Error::Domain(format!("RMSLE needs actuals above -1, got {bad}")));
    }
    let mut clamped = false;
    let total: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(a, &p)| {
            let p = if p <= -1.0 {
                clamped = true;
                RMSLE_FLOOR
            } else {
                p
            };
            (a.ln_1p() - p.ln_1p()).powi(2)
        })
        .sum();
    Ok(((total / y.len() as f64).sqrt(), clamped))
}

pub fn rmsle(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    rmsle_flagged(y, y_hat).map(|r| r.0)
}

/// MASE with the same-window naive denominator. A zero denominator yields
/// NaN and `true`.
pub fn mase_flagged(y: &[f64], y_hat: &[f64]) -> Result<(f64, bool)> {
    check_pair(y, y_hat)?;
    let n = y.len();
    if n < 2 {
        return Err(Error::TooShort(format!("MASE needs at least 2 points, got {n}")));
    }
    let numer = y.iter().zip(y_hat).map(|(a, p)| (a - p).abs()).sum::<f64>() / n as f64;
    let denom = y.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (n - 1) as f64;
    if denom == 0.0 {
        Ok((f64::NAN, true))
    } else {
        Ok((numer / denom, false))
    }
}

pub fn mase(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    mase_flagged(y, y_hat).map(|r| r.0)
}

/// All five metrics on one window plus any flags raised.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mae: f64,
    pub rmse: f64,
    pub smape: f64,
    pub rmsle: f64,
    pub mase: f64,
    pub flags: BTreeSet<MetricFlag>,
}

impl MetricReport {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Mae => self.mae,
            Metric::Rmse => self.rmse,
            Metric::Smape => self.smape,
            Metric::Rmsle => self.rmsle,
            Metric::Mase => self.mase,
        }
    }

    fn set(&mut self, metric: Metric, value: f64) {
        match metric {
            Metric::Mae => self.mae = value,
            Metric::Rmse => self.rmse = value,
            Metric::Smape => self.smape = value,
            Metric::Rmsle => self.rmsle = value,
            Metric::Mase => self.mase = value,
        }
    }

    /// Equality that treats NaN as equal to NaN.
    pub fn same_as(&self, other: &Self) -> bool {
        self.flags == other.flags
            && Metric::ALL.iter().all(|&m| {
                let (a, b) = (self.get(m), other.get(m));
                a == b || (a.is_nan() && b.is_nan())
            })
    }

    pub fn flags_string(&self) -> String {
        self.flags.iter().map(|f| f.as_str()).collect::<Vec<_>>().join("|")
    }
}

fn assemble(y: &[f64], y_hat: &[f64], mase: (f64, bool)) -> Result<MetricReport> {
    let (smape, smape_zero) = smape_flagged(y, y_hat)?;
    let (rmsle, clamped) = rmsle_flagged(y, y_hat)?;
    let flags = [
        (smape_zero, MetricFlag::SmapeZeroTerms),
        (clamped, MetricFlag::RmsleClamped),
        (mase.1, MetricFlag::MaseUndefined),
    ]
    .into_iter()
    .filter_map(|(on, f)| on.then_some(f))
    .collect();
    Ok(MetricReport {
        mae: mae(y, y_hat)?,
        rmse: rmse(y, y_hat)?,
        smape,
        rmsle,
        mase: mase.0,
        flags,
    })
}

/// Runs all five metrics; fails on the first violated precondition,
/// including `n < 2` for MASE.
pub fn metric_suite(y: &[f64], y_hat: &[f64]) -> Result<MetricReport> {
    check_pair(y, y_hat)?;
    let m = mase_flagged(y, y_hat)?;
    assemble(y, y_hat, m)
}

/// Like [`metric_suite`] but a single-point window reports MASE as NaN with
/// the undefined flag instead of failing.
pub fn window_metrics(y: &[f64], y_hat: &[f64]) -> Result<MetricReport> {
    check_pair(y, y_hat)?;
    if y.len() == 1 {
        return assemble(y, y_hat, (f64::NAN, true));
    }
    metric_suite(y, y_hat)
}

/// One scored cell of an evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub station: String,
    pub model: String,
    pub horizon: usize,
    /// Unix timestamp of the first target point.
    pub origin: i64,
    pub report: MetricReport,
}

fn metric_headers(negate: bool) -> Vec<String> {
    let mut h = vec!["station".to_string(), "model".into(), "horizon".into(), "origin".into()];
    h.extend(Metric::ALL.iter().map(|m| m.header(negate)));
    h.push("flags".into());
    h
}

fn sign(negate: bool) -> f64 {
    if negate {
        -1.0
    } else {
        1.0
    }
}

/// Writes rows as CSV. Values use the shortest representation that parses
/// back to the same float.
pub fn write_metric_rows<W: Write>(out: W, rows: &[MetricRow], negate: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(metric_headers(negate))?;
    let s = sign(negate);
    for r in rows {
        let mut rec = vec![r.station.clone(), r.model.clone(), r.horizon.to_string(), r.origin.to_string()];
        rec.extend(Metric::ALL.iter().map(|&m| (s * r.report.get(m)).to_string()));
        rec.push(r.report.flags_string());
        w.write_record(rec)?;
    }
    w.flush().map_err(|e| Error::io("<metrics csv>", e))?;
    Ok(())
}

/// Parses [`write_metric_rows`] output, undoing any negation.
pub fn read_metric_rows<R: Read>(input: R) -> Result<Vec<MetricRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let expected_fixed = ["station", "model", "horizon", "origin"];
    if headers.len() != 10 || headers.iter().take(4).ne(expected_fixed) || &headers[9] != "flags" {
        return Err(Error::Format(format!("unexpected metrics header {headers:?}")));
    }
    let mut columns = Vec::with_capacity(5);
    for h in headers.iter().skip(4).take(5) {
        columns.push(Metric::from_header(h)?);
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let bad = |msg: String| Error::Row { line, msg };
        let mut report = MetricReport {
            mae: 0.0,
            rmse: 0.0,
            smape: 0.0,
            rmsle: 0.0,
            mase: 0.0,
            flags: BTreeSet::new(),
        };
        for (k, &(metric, negated)) in columns.iter().enumerate() {
            let v: f64 = field(4 + k).parse().map_err(|_| bad(format!("bad {metric} value {:?}", field(4 + k))))?;
            report.set(metric, sign(negated) * v);
        }
        for f in field(9).split('|').filter(|s| !s.is_empty()) {
            report.flags.insert(f.parse()?);
        }
        rows.push(MetricRow {
            station: field(0).to_string(),
            model: field(1).to_string(),
            horizon: field(2).parse().map_err(|_| bad("bad horizon".into()))?,
            origin: field(3).parse().map_err(|_| bad("bad origin".into()))?,
            report,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn hand_examples() {
        assert!(close(mae(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 1.0 / 3.0));
        assert_eq!(rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 12.5f64.sqrt());
        assert_eq!(rmse(&[2.0], &[-1.5]).unwrap(), 3.5);
        assert_eq!(smape(&[1.0], &[3.0]).unwrap(), 1.0);
        assert_eq!(smape_flagged(&[0.0], &[0.0]).unwrap(), (0.0, true));
        assert!(close(rmsle(&[std::f64::consts::E - 1.0], &[0.0]).unwrap(), 1.0));
        assert!(close(mase(&[1.0, 2.0, 4.0], &[1.0, 3.0, 4.0]).unwrap(), 2.0 / 9.0));
    }

    #[test]
    fn perfect_forecasts_score_zero() {
        let y = [0.5, 1.5, 1.0, 2.0];
        let r = metric_suite(&y, &y).unwrap();
        assert_eq!([r.mae, r.rmse, r.smape, r.rmsle, r.mase], [0.0; 5]);
        assert!(r.flags.is_empty());
    }

    #[test]
    fn degenerate_cases_are_flagged() {
        let (m, undefined) = mase_flagged(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!(m.is_nan() && undefined);
        let (r, clamped) = rmsle_flagged(&[1.0], &[-2.0]).unwrap();
        assert!(r.is_finite() && clamped);
        assert!(matches!(rmsle(&[-1.0], &[0.0]), Err(Error::Domain(_))));
        assert!(matches!(mase(&[1.0], &[1.0]), Err(Error::TooShort(_))));
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
        let w = window_metrics(&[1.0], &[2.0]).unwrap();
        assert!(w.mase.is_nan() && w.flags.contains(&MetricFlag::MaseUndefined));
        assert_eq!(w.mae, 1.0);
    }

    #[test]
    fn suite_matches_individual_metrics() {
        let y = [1.0, 2.0, 4.0];
        let p = [1.0, 3.0, 4.0];
        let r = metric_suite(&y, &p).unwrap();
        assert_eq!(r.mae, mae(&y, &p).unwrap());
        assert_eq!(r.rmse, rmse(&y, &p).unwrap());
        assert_eq!(r.smape, smape(&y, &p).unwrap());
        assert_eq!(r.rmsle, rmsle(&y, &p).unwrap());
        assert_eq!(r.mase, mase(&y, &p).unwrap());
    }

    #[test]
    fn direct_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(2..40);
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let (mut abs, mut sq, mut sm, mut lg, mut naive) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                let e = y[i] - p[i];
                abs += e.abs();
                sq += e * e;
                sm += e.abs() / ((y[i].abs() + p[i].abs()) / 2.0);
                let d = (1.0 + y[i]).ln() - (1.0 + p[i]).ln();
                lg += d * d;
                if i > 0 {
                    naive += (y[i] - y[i - 1]).abs();
                }
            }
            let nf = n as f64;
            assert!(close(mae(&y, &p).unwrap(), abs / nf));
            assert!(close(rmse(&y, &p).unwrap(), (sq / nf).sqrt()));
            assert!(close(smape(&y, &p).unwrap(), sm / nf));
            assert!((rmsle(&y, &p).unwrap() - (lg / nf).sqrt()).abs() < 1e-12);
            assert!(close(mase(&y, &p).unwrap(), (abs / nf) / (naive / (nf - 1.0))));
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut flagged = metric_suite(&[2.0, 2.0], &[0.0, -3.0]).unwrap();
        flagged.smape = 0.1 + 0.2;
        let rows = vec![
            MetricRow {
                station: "41008".into(),
                model: "Theta".into(),
                horizon: 3,
                origin: 1_000_000,
                report: metric_suite(&[1.0, 2.0, 4.0], &[1.0, 3.0, 4.0]).unwrap(),
            },
            MetricRow {
                station: "s,with comma".into(),
                model: "NPTS".into(),
                horizon: 1,
                origin: -5,
                report: flagged,
            },
        ];
        for negate in [false, true] {
            let mut buf = Vec::new();
            write_metric_rows(&mut buf, &rows, negate).unwrap();
            let back = read_metric_rows(buf.as_slice()).unwrap();
            assert_eq!(back.len(), rows.len());
            for (a, b) in back.iter().zip(&rows) {
                assert_eq!((&a.station, &a.model, a.horizon, a.origin), (&b.station, &b.model, b.horizon, b.origin));
                assert!(a.report.same_as(&b.report));
            }
        }
    }

    #[test]
    fn negated_headers() {
        let mut buf = Vec::new();
        write_metric_rows(&mut buf, &[], true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.trim(), "station,model,horizon,origin,-MAE,-RMSE,-SMAPE,-RMSLE,-MASE,flags");
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..30).prop_flat_map(|n| (proptest::collection::vec(0.01f64..20.0, n), proptest::collection::vec(0.01f64..20.0, n)))
    }

    proptest! {
        #[test]
        fn scale_properties((y, p) in pair(), k in 0.01f64..100.0) {
            let ky: Vec<f64> = y.iter().map(|v| k * v).collect();
            let kp: Vec<f64> = p.iter().map(|v| k * v).collect();
            let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12);
            prop_assert!(rel(mae(&ky, &kp).unwrap(), k * mae(&y, &p).unwrap()));
            prop_assert!(rel(rmse(&ky, &kp).unwrap(), k * rmse(&y, &p).unwrap()));
            prop_assert!(rel(smape(&ky, &kp).unwrap(), smape(&y, &p).unwrap()));
            let m = mase(&y, &p).unwrap();
            if m.is_finite() {
                prop_assert!(rel(mase(&ky, &kp).unwrap(), m));
            }
            // negative k: MAE and RMSE scale by |k|
            let ny: Vec<f64> = y.iter().map(|v| -k * v).collect();
            let np: Vec<f64> = p.iter().map(|v| -k * v).collect();
            prop_assert!(rel(mae(&ny, &np).unwrap(), k * mae(&y, &p).unwrap()));
            prop_assert!(rel(rmse(&ny, &np).unwrap(), k * rmse(&y, &p).unwrap()));
        }

        #[test]
        fn permutation_invariance((y, p) in pair(), seed in any::<u64>()) {
            let mut idx: Vec<usize> = (0..y.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
            let py: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let pp: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
            let rel = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12);
            prop_assert!(rel(mae(&py, &pp).unwrap(), mae(&y, &p).unwrap()));
            prop_assert!(rel(rmse(&py, &pp).unwrap(), rmse(&y, &p).unwrap()));
            prop_assert!(rel(smape(&py, &pp).unwrap(), smape(&y, &p).unwrap()));
            prop_assert!(rel(rmsle(&py, &pp).unwrap(), rmsle(&y, &p).unwrap()));
        }

        #[test]
        fn metrics_are_nonnegative((y, p) in pair()) {
            let r = metric_suite(&y, &p).unwrap();
            for m in Metric::ALL {
                let v = r.get(m);
                prop_assert!(v.is_nan() || v >= 0.0);
            }
        }
    }

    #[test]
    fn mase_depends_on_order() {
        // same multiset of pairs, different order, different denominator
        let y = [1.0, 5.0, 2.0, 6.0];
        let p = [1.5, 4.0, 2.5, 6.5];
        let y2 = [1.0, 2.0, 5.0, 6.0];
        let p2 = [1.5, 2.5, 4.0, 6.5];
        assert_eq!(mae(&y, &p).unwrap(), mae(&y2, &p2).unwrap());
        assert_ne!(mase(&y, &p).unwrap(), mase(&y2, &p2).unwrap());
    }
}
