//! Per-station cache file: CSV with `timestamp_utc,swh_m`, missing values as
//! empty fields.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use crate::error::{Error, Result};
use crate::series::{TimeSeries, HOUR};

pub const CACHE_HEADER: [&str; 2] = ["timestamp_utc", "swh_m"];
const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

pub fn format_timestamp(ts: i64) -> String {
    DateTime::from_timestamp(ts, 0)
        .map(|d| d.format(TIME_FORMAT).to_string())
        .unwrap_or_else(|| ts.to_string())
}

pub fn parse_timestamp(s: &str) -> Result<i64> {
    NaiveDateTime::parse_from_str(s, TIME_FORMAT)
        .map(|d| d.and_utc().timestamp())
        .map_err(|e| Error::Format(format!("bad timestamp {s:?}: {e}")))
}

pub fn write_cache_to<W: Write>(out: W, series: &TimeSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CACHE_HEADER)?;
    for (&t, v) in series.timestamps().iter().zip(series.values()) {
        let value = v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([format_timestamp(t), value])?;
    }
    w.flush().map_err(|e| Error::io("<cache csv>", e))?;
    Ok(())
}

pub fn read_cache_from<R: Read>(input: R, station_id: &str) -> Result<TimeSeries> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().ne(CACHE_HEADER) {
        return Err(Error::Format(format!("cache header must be {}", CACHE_HEADER.join(","))));
    }
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let ts = parse_timestamp(rec.get(0).unwrap_or("")).map_err(|e| Error::Row { line, msg: e.to_string() })?;
        let raw = rec.get(1).unwrap_or("");
        let value = if raw.is_empty() {
            None
        } else {
            Some(raw.parse::<f64>().map_err(|_| Error::Row {
                line,
                msg: format!("bad value {raw:?}"),
            })?)
        };
        timestamps.push(ts);
        values.push(value);
    }
    if timestamps.is_empty() {
        return Err(Error::EmptySeries);
    }
    TimeSeries::with_frequency(station_id, timestamps, values, HOUR)
}

pub fn write_cache(path: &Path, series: &TimeSeries) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_cache_to(BufWriter::new(file), series)
}

/// Reads a cache file; the station id defaults to the file stem.
pub fn read_cache(path: &Path) -> Result<TimeSeries> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let station = path.file_stem().and_then(|s| s.to_str()).unwrap_or("station");
    read_cache_from(file, station)
}
