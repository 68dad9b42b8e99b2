//! NDBC historical standard-meteorological text files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::series::{dedup_by_timestamp, TimeSeries, HOUR};

/// WVHT values meaning "not measured".
pub const WVHT_SENTINELS: [f64; 2] = [99.0, 999.0];

/// A data row that could not be parsed.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub line: usize,
    pub msg: String,
}

/// Hourly rows extracted from one or more files, in file order. Repeated
/// hours are kept so that the caller decides how to resolve them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NdbcParse {
    pub station_id: String,
    pub rows: Vec<(i64, Option<f64>)>,
    pub data_rows: usize,
    pub present: usize,
    pub sentinel: usize,
    /// Sub-hourly rows dropped in favour of a row nearer the top of the hour.
    pub reduced: usize,
    pub errors: Vec<RowError>,
    /// Line numbers whose hour precedes the previous row's hour.
    pub order_violations: Vec<usize>,
}

impl NdbcParse {
    /// `present + sentinel + skipped + reduced == data_rows`.
    pub fn reconciles(&self) -> bool {
        self.present + self.sentinel + self.errors.len() + self.reduced == self.data_rows
    }

    pub fn duplicate_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        self.rows.iter().filter(|(t, _)| !seen.insert(*t)).count()
    }

    /// Keeps the first row of each repeated hour and lays the result on the
    /// hourly grid, so absent hours become missing values.
    pub fn into_series(self) -> Result<TimeSeries> {
        if self.rows.is_empty() {
            return Err(Error::EmptySeries);
        }
        dedup_by_timestamp(&self.station_id, &self.rows)?.regularize()
    }

    fn merge(&mut self, other: NdbcParse) {
        self.rows.extend(other.rows);
        self.data_rows += other.data_rows;
        self.present += other.present;
        self.sentinel += other.sentinel;
        self.reduced += other.reduced;
        self.errors.extend(other.errors);
        self.order_violations.extend(other.order_violations);
    }
}

struct Columns {
    year: usize,
    month: usize,
    day: usize,
    hour: usize,
    minute: Option<usize>,
    wvht: usize,
    count: usize,
}

fn header_columns(names: &[&str]) -> Result<Columns> {
    let find = |want: &[&str]| names.iter().position(|n| want.contains(n));
    let need = |want: &[&str]| find(want).ok_or_else(|| Error::Format(format!("header lacks a {} column", want[0])));
    Ok(Columns {
        year: need(&["YY", "YYYY", "YR"])?,
        month: need(&["MM", "MO"])?,
        day: need(&["DD", "DY"])?,
        hour: need(&["hh", "HH", "HR"])?,
        minute: find(&["mm", "MN"]),
        wvht: need(&["WVHT"])?,
        count: names.len(),
    })
}

fn is_header(line: &str) -> bool {
    line.starts_with('#') || line.split_whitespace().next().is_some_and(|t| t.chars().any(|c| c.is_ascii_alphabetic()))
}

struct Row {
    hour_ts: i64,
    offset_min: i64,
    exact_ts: i64,
    value: Option<f64>,
    line: usize,
}

fn parse_row(fields: &[&str], cols: &Columns, line: usize) -> std::result::Result<Row, String> {
    if fields.len() != cols.count {
        return Err(format!("expected {} fields, found {}", cols.count, fields.len()));
    }
    let int = |k: usize, what: &str| fields[k].parse::<u32>().map_err(|_| format!("bad {what} {:?}", fields[k]));
    let mut year = int(cols.year, "year")? as i32;
    if year < 100 {
        year += if year < 50 { 2000 } else { 1900 };
    }
    let (month, day, hour) = (int(cols.month, "month")?, int(cols.day, "day")?, int(cols.hour, "hour")?);
    let minute = match cols.minute {
        Some(k) => int(k, "minute")?,
        None => 0,
    };
    let stamp = NaiveDate::from_ymd_opt(year, month, day)
        .and_then(|d| d.and_hms_opt(hour, minute, 0))
        .ok_or_else(|| format!("invalid date {year}-{month}-{day} {hour}:{minute}"))?;
    let exact_ts = stamp.and_utc().timestamp();
    let raw: f64 = fields[cols.wvht].parse().map_err(|_| format!("bad WVHT {:?}", fields[cols.wvht]))?;
    if !raw.is_finite() || raw < 0.0 {
        return Err(format!("WVHT out of range: {raw}"));
    }
    let value = (!WVHT_SENTINELS.contains(&raw)).then_some(raw);
    // minutes past 30 belong to the next hour
    let hour_ts = (exact_ts + HOUR / 2 - 1).div_euclid(HOUR) * HOUR;
    Ok(Row {
        hour_ts,
        offset_min: (exact_ts - hour_ts).abs() / 60,
        exact_ts,
        value,
        line,
    })
}

/// Parses one stdmet file. Rows landing on the same hour from different
/// minutes are reduced to the one nearest the top of the hour, preferring
/// rows with a measured wave height. Rows with identical timestamps are all
/// kept.
pub fn parse_ndbc_stdmet<R: BufRead>(reader: R, station_id: &str) -> Result<NdbcParse> {
    let mut cols: Option<Columns> = None;
    let mut parse = NdbcParse {
        station_id: station_id.to_string(),
        ..NdbcParse::default()
    };
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(format!("<{station_id} stdmet>"), e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if is_header(trimmed) {
            if cols.is_none() {
                let names: Vec<&str> = trimmed.trim_start_matches('#').split_whitespace().collect();
                cols = Some(header_columns(&names)?);
            }
            continue;
        }
        let Some(c) = cols.as_ref() else {
            return Err(Error::Format("data row before any header line".into()));
        };
        parse.data_rows += 1;
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        match parse_row(&fields, c, line_no) {
            Ok(row) => rows.push(row),
            Err(msg) => parse.errors.push(RowError { line: line_no, msg }),
        }
    }
    if cols.is_none() {
        return Err(Error::Format("no header line found".into()));
    }

    let mut best: HashMap<i64, usize> = HashMap::new();
    for (k, r) in rows.iter().enumerate() {
        let rank = |r: &Row| (r.value.is_none(), r.offset_min);
        best.entry(r.hour_ts)
            .and_modify(|b| {
                if rank(r) < rank(&rows[*b]) {
                    *b = k;
                }
            })
            .or_insert(k);
    }
    let mut last_hour = i64::MIN;
    for r in &rows {
        let chosen = &rows[best[&r.hour_ts]];
        if r.exact_ts != chosen.exact_ts {
            parse.reduced += 1;
            continue;
        }
        if r.hour_ts < last_hour {
            parse.order_violations.push(r.line);
        }
        last_hour = r.hour_ts;
        match r.value {
            Some(_) => parse.present += 1,
            None => parse.sentinel += 1,
        }
        parse.rows.push((r.hour_ts, r.value));
    }
    if parse.data_rows == 0 {
        return Err(Error::EmptySeries);
    }
    Ok(parse)
}

/// Opens a plain or gzip-compressed file.
pub fn open_maybe_gz(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(GzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

pub fn parse_ndbc_file(path: &Path, station_id: &str) -> Result<NdbcParse> {
    parse_ndbc_stdmet(open_maybe_gz(path)?, station_id)
}

/// Files in `dir` whose names start with the station id, sorted by name.
pub fn station_files(dir: &Path, station_id: &str) -> Result<Vec<PathBuf>> {
    let prefix = station_id.to_ascii_lowercase();
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_ascii_lowercase();
        if path.is_file() && name.starts_with(&prefix) {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(Error::Format(format!("no files for station {station_id} in {}", dir.display())));
    }
    Ok(files)
}

/// Parses and concatenates every file of one station in a directory.
pub fn ingest_station(dir: &Path, station_id: &str) -> Result<NdbcParse> {
    let mut all = NdbcParse {
        station_id: station_id.to_string(),
        ..NdbcParse::default()
    };
    for path in station_files(dir, station_id)? {
        all.merge(parse_ndbc_file(&path, station_id)?);
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODERN: &str = "\
#YY  MM DD hh mm WDIR WSPD GST  WVHT   DPD   APD MWD   PRES  ATMP  WTMP  DEWP  VIS  TIDE
#yr  mo dy hr mn degT m/s  m/s     m   sec   sec degT   hPa  degC  degC  degC  nmi    ft
2010 01 01 00 50 200  5.0  6.0  1.20  8.00  5.10 190 1015.0  15.0  20.0  10.0 99.0 99.00
2010 01 01 01 50 200  5.0  6.0 99.00  8.00  5.10 190 1015.0  15.0  20.0  10.0 99.0 99.00
2010 01 01 02 20 200  5.0  6.0  1.40  8.00  5.10 190 1015.0  15.0  20.0  10.0 99.0 99.00
2010 01 01 02 50 200  5.0  6.0  1.50  8.00  5.10 190 1015.0  15.0  20.0  10.0 99.0 99.00
";

    #[test]
    fn sub_hourly_rows_go_to_nearest_hour() {
        let p = parse_ndbc_stdmet(MODERN.as_bytes(), "x").unwrap();
        let base = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
        // the 02:20 measurement beats the 01:50 sentinel for hour 02
        assert_eq!(p.rows, vec![(base + HOUR, Some(1.2)), (base + 2 * HOUR, Some(1.4)), (base + 3 * HOUR, Some(1.5))]);
        assert_eq!(p.reduced, 1);
        assert!(p.reconciles());
    }

    #[test]
    fn two_digit_years_and_old_headers() {
        let text = "YY MM DD hh WD WSPD GST WVHT\n88 11 10 00 100 3.0 4.0 0.90\n01 01 01 00 100 3.0 4.0 999.0\n";
        let p = parse_ndbc_stdmet(text.as_bytes(), "x").unwrap();
        let t88 = NaiveDate::from_ymd_opt(1988, 11, 10).unwrap().and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
        let t01 = NaiveDate::from_ymd_opt(2001, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp();
        assert_eq!(p.rows, vec![(t88, Some(0.9)), (t01, None)]);
    }

    #[test]
    fn header_only_and_missing_column() {
        assert!(matches!(parse_ndbc_stdmet("#YY MM DD hh WVHT\n".as_bytes(), "x"), Err(Error::EmptySeries)));
        assert!(matches!(parse_ndbc_stdmet("#YY MM DD hh WSPD\n2000 1 1 0 3.0\n".as_bytes(), "x"), Err(Error::Format(_))));
    }

    #[test]
    fn bad_rows_are_counted_not_fatal() {
        let text = "#YY MM DD hh WVHT\n2000 01 01 00 1.0\n2000 01 01 01 abc\n2000 13 01 02 1.0\n2000 01 01 03\n";
        let p = parse_ndbc_stdmet(text.as_bytes(), "x").unwrap();
        assert_eq!(p.rows.len(), 1);
        assert_eq!(p.errors.iter().map(|e| e.line).collect::<Vec<_>>(), vec![3, 4, 5]);
        assert!(p.reconciles());
    }

    #[test]
    fn out_of_order_rows_are_reported() {
        let text = "#YY MM DD hh WVHT\n2000 01 01 02 1.0\n2000 01 01 01 1.0\n";
        let p = parse_ndbc_stdmet(text.as_bytes(), "x").unwrap();
        assert_eq!(p.order_violations, vec![3]);
        assert_eq!(p.rows.len(), 2);
    }
}
