//! Manual count forms and the per-minute occupancy derived from them.
//!
//! A count form is a CSV file with a `key,value` header block, a blank line,
//! and one row per stop:
//!
//! ```text
//! route,OMNI LOOP
//! date,2023-01-01
//! capacity,90
//! on_board,30
//!
//! stop,station,transfer,arr,dep,on,off,load
//! 1,GOVERNMENT CENTER,METRORAIL,2:19 PM,2:19 PM,,,30
//! 2,THIRD STREET,BRICKELL LOOP,2:21 PM,2:22 PM,8,10,28
//! ```
//!
//! Times are `HH:MM`, `HH:MM:SS` (24 hour) or `h:MM[:SS] AM|PM`; seconds are
//! truncated when bucketing into minutes. Empty `on`/`off` cells read as 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::Occupancy;

const ROW_COLUMNS: [&str; 8] = ["stop", "station", "transfer", "arr", "dep", "on", "off", "load"];

/// Time of day with optional second resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClockTime {
    pub second_of_day: u32,
}

impl ClockTime {
    pub fn from_hms(h: u32, m: u32, s: u32) -> Self {
        ClockTime {
            second_of_day: h * 3600 + m * 60 + s,
        }
    }

    pub fn minute_of_day(&self) -> i64 {
        i64::from(self.second_of_day / 60)
    }

    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        let (clock, meridiem) = match text.rsplit_once(' ') {
            Some((c, m)) => (c.trim(), Some(m.trim().to_ascii_uppercase())),
            None => (text, None),
        };
        let parts: Vec<&str> = clock.split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            return None;
        }
        let num = |s: &str| -> Option<u32> {
            if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
                None
            } else {
                s.parse().ok()
            }
        };
        let mut h = num(parts[0])?;
        let m = num(parts[1])?;
        let s = if parts.len() == 3 { num(parts[2])? } else { 0 };
        if m > 59 || s > 59 {
            return None;
        }
        match meridiem.as_deref() {
            None => {
                if h > 23 {
                    return None;
                }
            }
            Some(ampm @ ("AM" | "PM")) => {
                if !(1..=12).contains(&h) {
                    return None;
                }
                h %= 12;
                if ampm == "PM" {
                    h += 12;
                }
            }
            Some(_) => return None,
        }
        Some(ClockTime::from_hms(h, m, s))
    }

    pub fn format_hm(&self) -> String {
        format!("{:02}:{:02}", self.second_of_day / 3600, (self.second_of_day / 60) % 60)
    }

    pub fn format_hms(&self) -> String {
        let s = self.second_of_day;
        format!("{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormHeader {
    pub checker: String,
    pub route: String,
    pub direction: String,
    pub date: NaiveDate,
    pub start_station: String,
    pub seats: u32,
    pub capacity: i64,
    pub on_board_initial: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormRow {
    pub stop_index: u32,
    pub station_name: String,
    pub transfer: String,
    pub arrival: ClockTime,
    pub departure: ClockTime,
    pub on: i64,
    pub off: i64,
    pub load: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormIssue {
    LoadMismatch { stop: u32, expected: i64, recorded: i64 },
    LoadOutOfRange { stop: u32, load: i64, capacity: i64 },
    ArrivalAfterDeparture { stop: u32 },
    DepartureOutOfOrder { stop: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountForm {
    pub header: FormHeader,
    pub rows: Vec<FormRow>,
    /// Consistency violations found when the form was built. They are
    /// reported, never corrected.
    pub issues: Vec<FormIssue>,
}

impl CountForm {
    pub fn new(header: FormHeader, rows: Vec<FormRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::NoStops);
        }
        let mut form = CountForm {
            header,
            rows,
            issues: Vec::new(),
        };
        form.issues = form.check();
        Ok(form)
    }

    pub fn check(&self) -> Vec<FormIssue> {
        let mut issues = Vec::new();
        let mut prev_load = self.header.on_board_initial;
        let mut prev_dep: Option<ClockTime> = None;
        for row in &self.rows {
            let expected = prev_load + row.on - row.off;
            if expected != row.load {
                issues.push(FormIssue::LoadMismatch {
                    stop: row.stop_index,
                    expected,
                    recorded: row.load,
                });
            }
            if row.load < 0 || row.load > self.header.capacity {
                issues.push(FormIssue::LoadOutOfRange {
                    stop: row.stop_index,
                    load: row.load,
                    capacity: self.header.capacity,
                });
            }
            if row.arrival > row.departure {
                issues.push(FormIssue::ArrivalAfterDeparture {
                    stop: row.stop_index,
                });
            }
            if prev_dep.is_some_and(|d| row.departure < d) {
                issues.push(FormIssue::DepartureOutOfOrder {
                    stop: row.stop_index,
                });
            }
            prev_dep = Some(row.departure);
            prev_load = row.load;
        }
        issues
    }

    pub fn is_consistent(&self) -> bool {
        self.issues.is_empty()
    }

    fn day_minute_offset(&self) -> i64 {
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
        self.header.date.signed_duration_since(epoch).num_days() * 1440
    }

    /// Epoch minute of a time of day on the form's date.
    pub fn epoch_minute(&self, t: ClockTime) -> i64 {
        self.day_minute_offset() + t.minute_of_day()
    }

    /// Load on board before boarding at row `k`.
    pub fn arrival_load(&self, k: usize) -> i64 {
        if k == 0 {
            self.header.on_board_initial
        } else {
            self.rows[k - 1].load
        }
    }

    /// Epoch-minute span `[first arrival, last departure]`.
    pub fn minute_span(&self) -> (i64, i64) {
        let first = self.rows.first().expect("non-empty form");
        let last = self.rows.last().expect("non-empty form");
        (self.epoch_minute(first.arrival), self.epoch_minute(last.departure))
    }

    /// Stations the vehicle may have been at during each minute of the trip.
    pub fn stations_by_minute(&self) -> BTreeMap<i64, BTreeSet<String>> {
        let mut out: BTreeMap<i64, BTreeSet<String>> = BTreeMap::new();
        for row in &self.rows {
            let (a, d) = (self.epoch_minute(row.arrival), self.epoch_minute(row.departure));
            for m in a..=d.max(a) {
                out.entry(m).or_default().insert(row.station_name.clone());
            }
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_count_form(&text)
    }

    pub fn to_csv(&self) -> String {
        let h = &self.header;
        let mut out = String::new();
        let quote = |s: &str| {
            if s.contains([',', '"']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        };
        let _ = writeln!(out, "checker,{}", quote(&h.checker));
        let _ = writeln!(out, "route,{}", quote(&h.route));
        let _ = writeln!(out, "direction,{}", quote(&h.direction));
        let _ = writeln!(out, "start_station,{}", quote(&h.start_station));
        let _ = writeln!(out, "date,{}", h.date.format("%Y-%m-%d"));
        let _ = writeln!(out, "seats,{}", h.seats);
        let _ = writeln!(out, "capacity,{}", h.capacity);
        let _ = writeln!(out, "on_board,{}", h.on_board_initial);
        out.push('\n');
        out.push_str(&ROW_COLUMNS.join(","));
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.stop_index,
                quote(&r.station_name),
                quote(&r.transfer),
                r.arrival.format_hms(),
                r.departure.format_hms(),
                r.on,
                r.off,
                r.load
            );
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

pub fn parse_count_form(text: &str) -> Result<CountForm> {
    let lines: Vec<&str> = text.lines().collect();
    let split = lines
        .iter()
        .position(|l| l.trim().is_empty())
        .ok_or_else(|| Error::schema(lines.len(), "missing blank line after header block"))?;

    let mut header_kv: BTreeMap<String, String> = BTreeMap::new();
    let header_text = lines[..split].join("\n");
    for (i, rec) in csv_reader(&header_text).records().enumerate() {
        let rec = rec.map_err(|e| Error::schema(i + 1, e.to_string()))?;
        if rec.len() < 2 {
            return Err(Error::schema(i + 1, "header lines must be `key,value`"));
        }
        header_kv.insert(rec[0].to_ascii_lowercase(), rec[1].to_string());
    }
    let text_of = |key: &str| header_kv.get(key).cloned().unwrap_or_default();
    let int_of = |key: &str, required: bool| -> Result<i64> {
        match header_kv.get(key) {
            Some(v) if !v.is_empty() => v
                .parse()
                .map_err(|_| Error::schema(0, format!("header `{key}` is not an integer: `{v}`"))),
            _ if required => Err(Error::schema(0, format!("missing header `{key}`"))),
            _ => Ok(0),
        }
    };
    let date_text = header_kv
        .get("date")
        .ok_or_else(|| Error::schema(0, "missing header `date`"))?;
    let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d")
        .map_err(|_| Error::schema(0, format!("bad date `{date_text}`, expected YYYY-MM-DD")))?;
    let header = FormHeader {
        checker: text_of("checker"),
        route: text_of("route"),
        direction: text_of("direction"),
        date,
        start_station: text_of("start_station"),
        seats: int_of("seats", false)? as u32,
        capacity: int_of("capacity", true)?,
        on_board_initial: int_of("on_board", true)?,
    };

    // Skip any further blank lines before the column header.
    let body_start = lines[split..]
        .iter()
        .position(|l| !l.trim().is_empty())
        .map(|p| split + p);
    let Some(body_start) = body_start else {
        return Err(Error::NoStops);
    };
    let body_text = lines[body_start..].join("\n");
    let mut rows = Vec::new();
    for (i, rec) in csv_reader(&body_text).records().enumerate() {
        let line = body_start + i + 1;
        let rec = rec.map_err(|e| Error::schema(line, e.to_string()))?;
        if i == 0 {
            let cols: Vec<String> = rec.iter().map(|c| c.to_ascii_lowercase()).collect();
            if cols != ROW_COLUMNS {
                return Err(Error::schema(
                    line,
                    format!("expected columns `{}`", ROW_COLUMNS.join(",")),
                ));
            }
            continue;
        }
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != ROW_COLUMNS.len() {
            return Err(Error::schema(line, format!("expected 8 fields, got {}", rec.len())));
        }
        let count = |idx: usize, allow_empty: bool| -> Result<i64> {
            let v = &rec[idx];
            if v.is_empty() && allow_empty {
                return Ok(0);
            }
            v.parse().map_err(|_| {
                Error::schema(line, format!("`{}` is not a count: `{v}`", ROW_COLUMNS[idx]))
            })
        };
        let time = |idx: usize| -> Result<ClockTime> {
            ClockTime::parse(&rec[idx]).ok_or_else(|| {
                Error::schema(line, format!("cannot parse `{}` time `{}`", ROW_COLUMNS[idx], &rec[idx]))
            })
        };
        rows.push(FormRow {
            stop_index: count(0, false)? as u32,
            station_name: rec[1].to_string(),
            transfer: rec[2].to_string(),
            arrival: time(3)?,
            departure: time(4)?,
            on: count(5, true)?,
            off: count(6, true)?,
            load: count(7, false)?,
        });
    }
    CountForm::new(header, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinuteOccupancy {
    pub minute: i64,
    pub occupancy: Occupancy,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OccupancySeries {
    pub entries: Vec<MinuteOccupancy>,
}

impl OccupancySeries {
    pub fn new(entries: Vec<MinuteOccupancy>) -> Result<Self> {
        if entries.windows(2).any(|w| w[1].minute <= w[0].minute) {
            return Err(Error::InvalidArgument("minutes must be strictly increasing".into()));
        }
        if entries.iter().any(|e| e.occupancy < Occupancy::zero()) {
            return Err(Error::InvalidArgument("occupancy must be non-negative".into()));
        }
        Ok(OccupancySeries { entries })
    }

    pub fn get(&self, minute: i64) -> Option<Occupancy> {
        self.entries
            .binary_search_by_key(&minute, |e| e.minute)
            .ok()
            .map(|i| self.entries[i].occupancy)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("minute_epoch,occupancy\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{}", e.minute, format_occupancy(e.occupancy));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, rec) in csv_reader(text).records().enumerate() {
            let rec = rec.map_err(|e| Error::schema(i + 1, e.to_string()))?;
            if i == 0 {
                if rec.get(0) != Some("minute_epoch") || rec.get(1) != Some("occupancy") {
                    return Err(Error::schema(1, "expected header `minute_epoch,occupancy`"));
                }
                continue;
            }
            let minute: i64 = rec
                .get(0)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::schema(i + 1, "bad minute"))?;
            let occupancy = rec
                .get(1)
                .and_then(parse_decimal)
                .ok_or_else(|| Error::schema(i + 1, "bad occupancy"))?;
            entries.push(MinuteOccupancy { minute, occupancy });
        }
        OccupancySeries::new(entries)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub fn occupancy_to_f64(o: Occupancy) -> f64 {
    o.to_f64().unwrap_or(f64::NAN)
}

fn format_occupancy(o: Occupancy) -> String {
    if o.is_integer() {
        o.to_integer().to_string()
    } else {
        format!("{}", occupancy_to_f64(o))
    }
}

/// Exact parse of a plain decimal such as `43.25`.
fn parse_decimal(text: &str) -> Option<Occupancy> {
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) || frac_part.len() > 17 {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i64 = digits.parse().ok()?;
    let denom = 10i64.checked_pow(frac_part.len() as u32)?;
    let r = Occupancy::new(numer, denom);
    Some(if neg { -r } else { r })
}

/// Per-minute occupancy from a count form.
///
/// For each minute between the first arrival and the last departure, every
/// stop whose `[arrival, departure]` minute range contains that minute
/// contributes both its arrival-side load (the previous row's load) and its
/// departure load. A minute with no stop involvement is pure travel and
/// takes the load after the most recent departure. The occupancy is the
/// mean of the collected loads.
pub fn aggregate_occupancy(form: &CountForm) -> OccupancySeries {
    let (first, last) = form.minute_span();
    let spans: Vec<(i64, i64)> = form
        .rows
        .iter()
        .map(|r| (form.epoch_minute(r.arrival), form.epoch_minute(r.departure)))
        .collect();
    let mut entries = Vec::new();
    for minute in first..=last {
        let mut loads: Vec<i64> = Vec::new();
        for (k, &(arr, dep)) in spans.iter().enumerate() {
            if arr <= minute && minute <= dep {
                loads.push(form.arrival_load(k));
                loads.push(form.rows[k].load);
            }
        }
        if loads.is_empty() {
            if let Some(k) = spans.iter().rposition(|&(_, dep)| dep < minute) {
                loads.push(form.rows[k].load);
            }
        }
        if loads.is_empty() {
            continue;
        }
        let sum: i64 = loads.iter().sum();
        entries.push(MinuteOccupancy {
            minute,
            occupancy: Occupancy::new(sum, loads.len() as i64),
        });
    }
    OccupancySeries { entries }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub minutes: Vec<i64>,
    pub features: Vec<FeatureVector>,
    pub targets: Vec<Occupancy>,
    pub unmatched_truth: Vec<i64>,
    pub unmatched_features: Vec<i64>,
}

/// Inner join of truth and features on epoch minute.
pub fn align(series: &OccupancySeries, features: &[FeatureVector]) -> Result<AlignedDataset> {
    let feature_minutes: BTreeSet<i64> = features.iter().map(|f| f.minute).collect();
    let mut out = AlignedDataset {
        minutes: Vec::new(),
        features: Vec::new(),
        targets: Vec::new(),
        unmatched_truth: Vec::new(),
        unmatched_features: Vec::new(),
    };
    for f in features {
        match series.get(f.minute) {
            Some(y) => {
                out.minutes.push(f.minute);
                out.features.push(f.clone());
                out.targets.push(y);
            }
            None => out.unmatched_features.push(f.minute),
        }
    }
    out.unmatched_truth = series
        .entries
        .iter()
        .map(|e| e.minute)
        .filter(|m| !feature_minutes.contains(m))
        .collect();
    if out.minutes.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const OMNI_FORM: &str = include_str!("../data/omni_count_form.csv");

    fn minute_at(form: &CountForm, h: u32, m: u32) -> i64 {
        form.epoch_minute(ClockTime::from_hms(h, m, 0))
    }

    #[test]
    fn parses_transcribed_form() {
        let form = parse_count_form(OMNI_FORM).unwrap();
        assert_eq!(form.rows.len(), 20);
        assert_eq!(form.header.capacity, 90);
        assert_eq!(form.header.on_board_initial, 30);
        assert_eq!(form.rows[18].station_name, "WILKIE D. FERGUSON, JR");
        assert!(form.is_consistent(), "{:?}", form.issues);
        assert_eq!(form.rows[0].on, 0);
    }

    #[test]
    fn worked_minutes() {
        let form = parse_count_form(OMNI_FORM).unwrap();
        let series = aggregate_occupancy(&form);
        assert_eq!(series.get(minute_at(&form, 14, 20)), Some(Occupancy::from_integer(30)));
        assert_eq!(series.get(minute_at(&form, 14, 21)), Some(Occupancy::from_integer(29)));
        assert_eq!(series.get(minute_at(&form, 14, 27)), Some(Occupancy::new(4325, 100)));
        // One entry per minute from 14:19 to 14:49.
        assert_eq!(series.len(), 31);
    }

    #[test]
    fn empty_rows_is_no_stops() {
        let text = "date,2023-01-01\ncapacity,90\non_board,0\n\nstop,station,transfer,arr,dep,on,off,load\n";
        assert!(matches!(parse_count_form(text), Err(Error::NoStops)));
        let text = "date,2023-01-01\ncapacity,90\non_board,0\n\n";
        assert!(matches!(parse_count_form(text), Err(Error::NoStops)));
    }

    #[test]
    fn perturbed_load_is_flagged_not_rejected() {
        let text = OMNI_FORM.replace("3,KNIGHT CENTER,,2:23 PM,2:23 PM,6,4,30", "3,KNIGHT CENTER,,2:23 PM,2:23 PM,6,4,31");
        let form = parse_count_form(&text).unwrap();
        assert!(form.issues.contains(&FormIssue::LoadMismatch {
            stop: 3,
            expected: 30,
            recorded: 31
        }));
        // Row 4 now disagrees with the recorded 31 as well.
        assert!(form.issues.contains(&FormIssue::LoadMismatch {
            stop: 4,
            expected: 39,
            recorded: 38
        }));
    }

    #[test]
    fn schema_errors() {
        let bad_cols = OMNI_FORM.replace("stop,station,transfer,arr,dep,on,off,load", "stop,station,arr,dep,on,off,load");
        assert!(matches!(parse_count_form(&bad_cols), Err(Error::Schema { .. })));
        let bad_count = OMNI_FORM.replace(",8,10,28", ",eight,10,28");
        assert!(matches!(parse_count_form(&bad_count), Err(Error::Schema { .. })));
        let bad_time = OMNI_FORM.replace("2:21 PM,2:22 PM", "2:61 PM,2:22 PM");
        assert!(matches!(parse_count_form(&bad_time), Err(Error::Schema { .. })));
        let no_capacity = OMNI_FORM.replace("capacity,90\n", "");
        assert!(parse_count_form(&no_capacity).is_err());
    }

    #[test]
    fn clock_parsing() {
        assert_eq!(ClockTime::parse("2:19 PM"), Some(ClockTime::from_hms(14, 19, 0)));
        assert_eq!(ClockTime::parse("12:05 AM"), Some(ClockTime::from_hms(0, 5, 0)));
        assert_eq!(ClockTime::parse("12:05 PM"), Some(ClockTime::from_hms(12, 5, 0)));
        assert_eq!(ClockTime::parse("14:41:06"), Some(ClockTime::from_hms(14, 41, 6)));
        assert_eq!(ClockTime::parse("14:41:06").unwrap().minute_of_day(), 14 * 60 + 41);
        assert_eq!(ClockTime::parse("25:00"), None);
        assert_eq!(ClockTime::parse("13:00 PM"), None);
        assert_eq!(ClockTime::parse("noon"), None);
    }

    #[test]
    fn csv_round_trips() {
        let form = parse_count_form(OMNI_FORM).unwrap();
        let back = parse_count_form(&form.to_csv()).unwrap();
        assert_eq!(back, form);
        let series = aggregate_occupancy(&form);
        assert_eq!(OccupancySeries::parse_csv(&series.to_csv()).unwrap(), series);
    }

    #[test]
    fn telescoping_on_consistent_form() {
        let form = parse_count_form(OMNI_FORM).unwrap();
        let on: i64 = form.rows.iter().map(|r| r.on).sum();
        let off: i64 = form.rows.iter().map(|r| r.off).sum();
        assert_eq!(form.rows.last().unwrap().load, form.header.on_board_initial + on - off);
    }

    #[test]
    fn decimal_parse_is_exact() {
        assert_eq!(parse_decimal("43.25"), Some(Occupancy::new(173, 4)));
        assert_eq!(parse_decimal("30"), Some(Occupancy::from_integer(30)));
        assert_eq!(parse_decimal("x"), None);
        assert_eq!(parse_decimal("."), None);
    }

    fn fv(minute: i64) -> FeatureVector {
        FeatureVector::empty(minute, 0, 0)
    }

    #[test]
    fn align_joins_on_minute() {
        let series = OccupancySeries::new(
            (0..5)
                .map(|m| MinuteOccupancy {
                    minute: m,
                    occupancy: Occupancy::from_integer(m),
                })
                .collect(),
        )
        .unwrap();
        let full: Vec<_> = (0..5).map(fv).collect();
        assert_eq!(align(&series, &full).unwrap().minutes.len(), 5);

        let disjoint: Vec<_> = (10..12).map(fv).collect();
        assert!(matches!(align(&series, &disjoint), Err(Error::EmptyIntersection)));

        let partial: Vec<_> = (3..8).map(fv).collect();
        let a = align(&series, &partial).unwrap();
        let expected: BTreeSet<i64> = (0..5).collect::<BTreeSet<_>>().intersection(&(3..8).collect()).copied().collect();
        assert_eq!(a.minutes, expected.into_iter().collect::<Vec<_>>());
        assert_eq!(a.unmatched_features, vec![5, 6, 7]);
        assert_eq!(a.unmatched_truth, vec![0, 1, 2]);
    }
}
