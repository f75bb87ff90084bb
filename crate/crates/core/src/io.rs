//! CSV readers and writers for the workspace files.
//!
//! Readers collect every row-level problem as a [`SchemaIssue`] with its
//! 1-based file line instead of stopping at the first one. Only unreadable
//! files and malformed headers are hard errors.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use csv::{ReaderBuilder, StringRecord, WriterBuilder};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{AgeBand, City, CityMonthPanel, Factor, FactorMap, LatLon, OutcomeSeries, Region, Sex, StationDay, Virus, YearMonth};
use crate::pipeline::{Area, CaseRow, StationMonth};

pub const STATIONS_HEADER: [&str; 11] = [
    "station_id", "lat", "lon", "date", "temp", "pressure", "vapour", "rain", "sun", "rh", "wind",
];
pub const CASES_HEADER: [&str; 7] = ["month", "city_or_region", "virus", "age_band", "sex", "tested", "positive"];
pub const CITIES_HEADER: [&str; 4] = ["city_id", "lat", "lon", "region"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SchemaIssue {
    pub path: String,
    pub line: u64,
    pub column: String,
    pub reason: String,
}

impl SchemaIssue {
    pub fn into_error(self) -> Error {
        Error::Schema {
            path: self.path,
            line: self.line,
            column: self.column,
            reason: self.reason,
        }
    }
}

impl std::fmt::Display for SchemaIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}: column {}: {}", self.path, self.line, self.column, self.reason)
    }
}

/// Parsed rows plus every issue found on the way.
#[derive(Debug, Clone)]
pub struct Parsed<T> {
    pub rows: Vec<T>,
    pub issues: Vec<SchemaIssue>,
}

impl<T> Parsed<T> {
    /// The rows, or the first issue as an error.
    pub fn strict(self) -> Result<Vec<T>> {
        match self.issues.into_iter().next() {
            Some(i) => Err(i.into_error()),
            None => Ok(self.rows),
        }
    }
}

fn open(path: &Path) -> Result<String> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| Error::io(path, e))?;
    Ok(s)
}

struct Table<'a> {
    path: String,
    columns: BTreeMap<&'a str, usize>,
}

impl<'a> Table<'a> {
    fn new(path: &Path, header: &StringRecord, expected: &[&'a str]) -> Result<Self> {
        let path = path.display().to_string();
        let mut columns = BTreeMap::new();
        for &name in expected {
            let idx = header.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Schema {
                path: path.clone(),
                line: 1,
                column: name.to_string(),
                reason: format!("missing header column (expected {})", expected.join(",")),
            })?;
            columns.insert(name, idx);
        }
        Ok(Table { path, columns })
    }

    fn cell<'r>(&self, rec: &'r StringRecord, col: &str) -> &'r str {
        rec.get(self.columns[col]).unwrap_or("").trim()
    }

    fn issue(&self, rec: &StringRecord, col: &str, reason: impl Into<String>) -> SchemaIssue {
        SchemaIssue {
            path: self.path.clone(),
            line: rec.position().map_or(0, |p| p.line()),
            column: col.to_string(),
            reason: reason.into(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, rec: &StringRecord, col: &str) -> std::result::Result<T, SchemaIssue> {
        let raw = self.cell(rec, col);
        raw.parse()
            .map_err(|_| self.issue(rec, col, format!("cannot parse {raw:?}")))
    }

    fn optional_f64(&self, rec: &StringRecord, col: &str) -> std::result::Result<Option<f64>, SchemaIssue> {
        let raw = self.cell(rec, col);
        if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
            return Ok(None);
        }
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(self.issue(rec, col, format!("cannot parse {raw:?} as a number"))),
        }
    }
}

fn records(path: &Path, text: &str) -> Result<(StringRecord, Vec<std::result::Result<StringRecord, csv::Error>>)> {
    let mut rdr = ReaderBuilder::new().has_headers(true).flexible(false).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::Schema {
        path: path.display().to_string(),
        line: 1,
        column: "header".into(),
        reason: e.to_string(),
    })?;
    let header = header.clone();
    Ok((header, rdr.records().collect()))
}

fn broken_record(path: &Path, e: &csv::Error) -> SchemaIssue {
    SchemaIssue {
        path: path.display().to_string(),
        line: e.position().map_or(0, |p| p.line()),
        column: "*".into(),
        reason: e.to_string(),
    }
}

pub fn read_stations(path: &Path) -> Result<Parsed<StationDay>> {
    parse_stations(path, &open(path)?)
}

pub fn parse_stations(path: &Path, text: &str) -> Result<Parsed<StationDay>> {
    let (header, recs) = records(path, text)?;
    let t = Table::new(path, &header, &STATIONS_HEADER)?;
    let mut rows = Vec::new();
    let mut issues = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in recs {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                issues.push(broken_record(path, &e));
                continue;
            }
        };
        let parsed = (|| {
            let station_id = t.cell(&rec, "station_id").to_string();
            if station_id.is_empty() {
                return Err(t.issue(&rec, "station_id", "empty station id"));
            }
            let lat: f64 = t.parse(&rec, "lat")?;
            let lon: f64 = t.parse(&rec, "lon")?;
            let raw_date = t.cell(&rec, "date");
            let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
                .map_err(|_| t.issue(&rec, "date", format!("expected YYYY-MM-DD, got {raw_date:?}")))?;
            let mut values = FactorMap::default();
            for f in Factor::ALL {
                values[f] = t.optional_f64(&rec, f.code())?;
            }
            let day = StationDay {
                station_id,
                location: LatLon { lat, lon },
                date,
                values,
            };
            if let Some((col, reason)) = day.violation() {
                return Err(t.issue(&rec, col, reason));
            }
            if !seen.insert((day.station_id.clone(), day.date)) {
                return Err(t.issue(&rec, "date", format!("duplicate record for station {} on {}", day.station_id, day.date)));
            }
            Ok(day)
        })();
        match parsed {
            Ok(d) => rows.push(d),
            Err(i) => issues.push(i),
        }
    }
    Ok(Parsed { rows, issues })
}

pub fn read_cities(path: &Path) -> Result<Parsed<City>> {
    parse_cities(path, &open(path)?)
}

pub fn parse_cities(path: &Path, text: &str) -> Result<Parsed<City>> {
    let (header, recs) = records(path, text)?;
    let t = Table::new(path, &header, &CITIES_HEADER)?;
    let mut rows: Vec<City> = Vec::new();
    let mut issues = Vec::new();
    for rec in recs {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                issues.push(broken_record(path, &e));
                continue;
            }
        };
        let parsed = (|| {
            let id = t.cell(&rec, "city_id").to_string();
            if id.is_empty() {
                return Err(t.issue(&rec, "city_id", "empty city id"));
            }
            if id.parse::<Region>().is_ok() {
                return Err(t.issue(&rec, "city_id", "city id must not be a region name"));
            }
            if rows.iter().any(|c| c.id == id) {
                return Err(t.issue(&rec, "city_id", format!("duplicate city {id}")));
            }
            let lat: f64 = t.parse(&rec, "lat")?;
            let lon: f64 = t.parse(&rec, "lon")?;
            let location = LatLon::new(lat, lon)
                .map_err(|_| t.issue(&rec, if (-90.0..=90.0).contains(&lat) { "lon" } else { "lat" }, format!("coordinate ({lat}, {lon}) out of range")))?;
            let region: Region = t.parse(&rec, "region")?;
            if region == Region::All {
                return Err(t.issue(&rec, "region", "region must be north or south"));
            }
            Ok(City { id, location, region })
        })();
        match parsed {
            Ok(c) => rows.push(c),
            Err(i) => issues.push(i),
        }
    }
    Ok(Parsed { rows, issues })
}

/// Reads the case file. Pass the city list to reject unknown city ids.
pub fn read_cases(path: &Path, cities: Option<&[City]>) -> Result<Parsed<CaseRow>> {
    parse_cases(path, &open(path)?, cities)
}

pub fn parse_cases(path: &Path, text: &str, cities: Option<&[City]>) -> Result<Parsed<CaseRow>> {
    let (header, recs) = records(path, text)?;
    let t = Table::new(path, &header, &CASES_HEADER)?;
    let mut rows = Vec::new();
    let mut issues = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in recs {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                issues.push(broken_record(path, &e));
                continue;
            }
        };
        let parsed = (|| {
            let month: YearMonth = t.parse(&rec, "month")?;
            let raw_area = t.cell(&rec, "city_or_region");
            let area = match raw_area.parse::<Region>() {
                Ok(r) => Area::Region(r),
                Err(_) if raw_area.is_empty() => return Err(t.issue(&rec, "city_or_region", "empty")),
                Err(_) => {
                    if let Some(cs) = cities {
                        if !cs.iter().any(|c| c.id == raw_area) {
                            return Err(t.issue(&rec, "city_or_region", format!("unknown city {raw_area:?}")));
                        }
                    }
                    Area::City(raw_area.to_string())
                }
            };
            let virus: Virus = t.parse(&rec, "virus")?;
            let age_band = match t.cell(&rec, "age_band") {
                "" | "all" => None,
                _ => Some(t.parse::<AgeBand>(&rec, "age_band")?),
            };
            let sex = match t.cell(&rec, "sex") {
                "" | "all" => None,
                _ => Some(t.parse::<Sex>(&rec, "sex")?),
            };
            let tested: u64 = t.parse(&rec, "tested")?;
            let positive: u64 = t.parse(&rec, "positive")?;
            if positive > tested {
                return Err(t.issue(&rec, "positive", format!("positive ({positive}) must not exceed tested ({tested})")));
            }
            let key = (month, format!("{area:?}"), virus, age_band, sex);
            if !seen.insert(key) {
                return Err(t.issue(&rec, "month", "duplicate row for this month, area and group"));
            }
            Ok(CaseRow {
                month,
                area,
                virus,
                age_band,
                sex,
                tested,
                positive,
            })
        })();
        match parsed {
            Ok(c) => rows.push(c),
            Err(i) => issues.push(i),
        }
    }
    Ok(Parsed { rows, issues })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(WriterBuilder::new().from_writer(f))
}

fn finish<W: Write>(path: &Path, w: csv::Writer<W>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .flush()
        .map_err(|e| Error::io(path, e))
}

pub fn write_stations(path: &Path, days: &[StationDay]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(STATIONS_HEADER)?;
    for d in days {
        let mut rec = vec![
            d.station_id.clone(),
            d.location.lat.to_string(),
            d.location.lon.to_string(),
            d.date.format("%Y-%m-%d").to_string(),
        ];
        rec.extend(d.values.0.iter().map(|&v| fmt_opt(v)));
        w.write_record(&rec)?;
    }
    finish(path, w)
}

pub fn write_cities(path: &Path, cities: &[City]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(CITIES_HEADER)?;
    for c in cities {
        w.write_record([
            c.id.clone(),
            c.location.lat.to_string(),
            c.location.lon.to_string(),
            c.region.to_string(),
        ])?;
    }
    finish(path, w)
}

pub fn write_cases(path: &Path, rows: &[CaseRow]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(CASES_HEADER)?;
    for r in rows {
        let area = match &r.area {
            Area::City(c) => c.clone(),
            Area::Region(reg) => reg.to_string(),
        };
        w.write_record([
            r.month.to_string(),
            area,
            r.virus.to_string(),
            r.age_band.map_or_else(String::new, |a| a.to_string()),
            r.sex.map_or_else(String::new, |s| s.to_string()),
            r.tested.to_string(),
            r.positive.to_string(),
        ])?;
    }
    finish(path, w)
}

fn factor_columns(prefix: &[&str], with_coverage: bool) -> Vec<String> {
    let mut h: Vec<String> = prefix.iter().map(|s| s.to_string()).collect();
    h.extend(Factor::ALL.iter().map(|f| f.code().to_string()));
    if with_coverage {
        h.extend(Factor::ALL.iter().map(|f| format!("{}_coverage", f.code())));
    }
    h
}

/// `station_id,lat,lon,month,<factors>,<factor>_coverage...`
pub fn write_station_months(path: &Path, rows: &[StationMonth]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(factor_columns(&["station_id", "lat", "lon", "month"], true))?;
    for r in rows {
        let mut rec = vec![
            r.station_id.clone(),
            r.location.lat.to_string(),
            r.location.lon.to_string(),
            r.month.to_string(),
        ];
        rec.extend(r.values.0.iter().map(|&v| fmt_opt(v)));
        rec.extend(r.coverage.0.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    finish(path, w)
}

pub fn read_station_months(path: &Path) -> Result<Vec<StationMonth>> {
    let text = open(path)?;
    let (header, recs) = records(path, &text)?;
    let cols = factor_columns(&["station_id", "lat", "lon", "month"], true);
    let names: Vec<&str> = cols.iter().map(String::as_str).collect();
    let t = Table::new(path, &header, &names)?;
    let mut out = Vec::new();
    for rec in recs {
        let rec = rec.map_err(|e| broken_record(path, &e).into_error())?;
        let row = (|| {
            let mut values = FactorMap::default();
            let mut coverage = FactorMap::default();
            for f in Factor::ALL {
                values[f] = t.optional_f64(&rec, f.code())?;
                coverage[f] = t.parse(&rec, &format!("{}_coverage", f.code()))?;
            }
            let lat: f64 = t.parse(&rec, "lat")?;
            let lon: f64 = t.parse(&rec, "lon")?;
            Ok(StationMonth {
                station_id: t.cell(&rec, "station_id").to_string(),
                location: LatLon::new(lat, lon).map_err(|e| t.issue(&rec, "lat", e.to_string()))?,
                month: t.parse(&rec, "month")?,
                values,
                coverage,
            })
        })();
        out.push(row.map_err(SchemaIssue::into_error)?);
    }
    Ok(out)
}

/// `city_id,lat,lon,month,<factors>,<factor>_coverage...`
pub fn write_city_months(path: &Path, rows: &[CityMonthPanel]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(factor_columns(&["city_id", "lat", "lon", "month"], true))?;
    for r in rows {
        let mut rec = vec![
            r.city_id.clone(),
            r.location.lat.to_string(),
            r.location.lon.to_string(),
            r.month.to_string(),
        ];
        rec.extend(r.values.0.iter().map(|&v| fmt_opt(v)));
        rec.extend(r.coverage.0.iter().map(|c| c.to_string()));
        w.write_record(&rec)?;
    }
    finish(path, w)
}

/// `virus,region,age_band,sex,month,tested,positive,rate`; the rate is empty
/// for months with nobody tested.
pub fn write_outcomes(path: &Path, series: &[OutcomeSeries]) -> Result<()> {
    let mut w = create(path)?;
    w.write_record(["virus", "region", "age_band", "sex", "month", "tested", "positive", "rate"])?;
    for s in series {
        for p in s.points() {
            w.write_record([
                s.key.virus.to_string(),
                s.key.region.to_string(),
                s.key.age_band.map_or_else(String::new, |a| a.to_string()),
                s.key.sex.map_or_else(String::new, |x| x.to_string()),
                p.month().to_string(),
                p.tested().to_string(),
                p.positive().to_string(),
                fmt_opt(p.rate()),
            ])?;
        }
    }
    finish(path, w)
}

/// Row counts, date range and per-factor missing share of a station file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationSummary {
    pub rows: usize,
    pub stations: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub missing_rate: BTreeMap<Factor, f64>,
}

pub fn summarize_stations(days: &[StationDay]) -> StationSummary {
    let stations: BTreeSet<&str> = days.iter().map(|d| d.station_id.as_str()).collect();
    let missing_rate = Factor::ALL
        .into_iter()
        .map(|f| {
            let missing = days.iter().filter(|d| d.values[f].is_none()).count();
            let rate = if days.is_empty() { 0.0 } else { missing as f64 / days.len() as f64 };
            (f, rate)
        })
        .collect();
    StationSummary {
        rows: days.len(),
        stations: stations.len(),
        first_date: days.iter().map(|d| d.date).min(),
        last_date: days.iter().map(|d| d.date).max(),
        missing_rate,
    }
}
