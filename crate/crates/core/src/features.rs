//! Per-minute feature vectors and lagged windows.
//!
//! Feature CSV columns, in this order:
//!
//! ```text
//! minute_epoch, MAC_num, source_random_num, data_rate_mean, SSID_none_num,
//! SSID_missing_num, captured_length_mean, duration_mean, random_bursts,
//! rssi_60_55, rssi_55_50, ..., station_<slug>...
//! ```
//!
//! One `rssi_*` column per configured bin and one `station_*` indicator per
//! station in the configured station list.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::capture::{Capture, ProbeRecord, Ssid};
use crate::error::{Error, Result};
use crate::ground_truth::{occupancy_to_f64, OccupancySeries};
use crate::mac::MacAddress;

pub const DEFAULT_BURST_GAP_US: u64 = 500_000;

/// RSSI interval `[lo, hi)`, or `[lo, hi]` when `closed` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RssiBin {
    pub lo: i32,
    pub hi: i32,
    #[serde(default)]
    pub closed: bool,
}

impl RssiBin {
    pub fn contains(&self, rssi: i32) -> bool {
        rssi >= self.lo && (rssi < self.hi || (self.closed && rssi == self.hi))
    }

    /// `rssi_60_55` for `[-60, -55)`.
    pub fn column_name(&self) -> String {
        format!("rssi_{}_{}", -self.lo, -self.hi)
    }
}

pub fn default_rssi_bins() -> Vec<RssiBin> {
    let mut bins: Vec<RssiBin> = (0..5)
        .map(|k| RssiBin {
            lo: -60 + 5 * k,
            hi: -55 + 5 * k,
            closed: false,
        })
        .collect();
    bins.push(RssiBin {
        lo: -35,
        hi: 0,
        closed: true,
    });
    bins
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub burst_gap_us: u64,
    pub rssi_bins: Vec<RssiBin>,
    /// Station universe for the one-hot indicators, in column order.
    pub stations: Vec<String>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            burst_gap_us: DEFAULT_BURST_GAP_US,
            rssi_bins: default_rssi_bins(),
            stations: Vec::new(),
        }
    }
}

impl FeatureConfig {
    pub fn with_stations<I: IntoIterator<Item = S>, S: Into<String>>(stations: I) -> Self {
        FeatureConfig {
            stations: stations.into_iter().map(Into::into).collect(),
            ..FeatureConfig::default()
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut cols: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
        cols.extend(self.rssi_bins.iter().map(RssiBin::column_name));
        cols.extend(self.stations.iter().map(|s| format!("station_{}", slug(s))));
        cols
    }

    pub fn width(&self) -> usize {
        BASE_COLUMNS.len() + self.rssi_bins.len() + self.stations.len()
    }
}

pub const BASE_COLUMNS: [&str; 8] = [
    "MAC_num",
    "source_random_num",
    "data_rate_mean",
    "SSID_none_num",
    "SSID_missing_num",
    "captured_length_mean",
    "duration_mean",
    "random_bursts",
];

fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Burst {
    pub mac: MacAddress,
    pub start: u64,
    pub end: u64,
    pub frame_count: usize,
}

/// Splits each address's frames into maximal runs whose consecutive gaps are
/// at most `burst_gap_us`. Output is ordered by burst start, then address.
pub fn detect_bursts(records: &[&ProbeRecord], burst_gap_us: u64) -> Vec<Burst> {
    let mut by_mac: BTreeMap<MacAddress, Vec<u64>> = BTreeMap::new();
    for r in records {
        by_mac.entry(r.effective_source()).or_default().push(r.timestamp_us);
    }
    let mut bursts = Vec::new();
    for (mac, mut times) in by_mac {
        times.sort_unstable();
        let mut current = Burst {
            mac,
            start: times[0],
            end: times[0],
            frame_count: 1,
        };
        for &t in &times[1..] {
            if t - current.end <= burst_gap_us {
                current.end = t;
                current.frame_count += 1;
            } else {
                bursts.push(current);
                current = Burst {
                    mac,
                    start: t,
                    end: t,
                    frame_count: 1,
                };
            }
        }
        bursts.push(current);
    }
    bursts.sort_by_key(|b| (b.start, b.mac));
    bursts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub minute: i64,
    pub mac_num: usize,
    pub source_random_num: usize,
    pub data_rate_mean: f64,
    pub ssid_none_num: usize,
    pub ssid_missing_num: usize,
    pub captured_length_mean: f64,
    pub duration_mean: f64,
    pub random_bursts: usize,
    pub rssi_bins: Vec<usize>,
    pub station_ids: Vec<u8>,
}

impl FeatureVector {
    pub fn empty(minute: i64, n_bins: usize, n_stations: usize) -> Self {
        FeatureVector {
            minute,
            mac_num: 0,
            source_random_num: 0,
            data_rate_mean: 0.0,
            ssid_none_num: 0,
            ssid_missing_num: 0,
            captured_length_mean: 0.0,
            duration_mean: 0.0,
            random_bursts: 0,
            rssi_bins: vec![0; n_bins],
            station_ids: vec![0; n_stations],
        }
    }

    /// Feature values in column order, without the minute.
    pub fn to_row(&self) -> Vec<f64> {
        let mut row = vec![
            self.mac_num as f64,
            self.source_random_num as f64,
            self.data_rate_mean,
            self.ssid_none_num as f64,
            self.ssid_missing_num as f64,
            self.captured_length_mean,
            self.duration_mean,
            self.random_bursts as f64,
        ];
        row.extend(self.rssi_bins.iter().map(|&c| c as f64));
        row.extend(self.station_ids.iter().map(|&s| f64::from(s)));
        row
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Feature vector of one minute. `stations` are the stations the vehicle was
/// at during the minute; names outside the configured universe are ignored.
pub fn extract_features(
    minute: i64,
    records: &[&ProbeRecord],
    stations: &BTreeSet<String>,
    config: &FeatureConfig,
) -> FeatureVector {
    let mut fv = FeatureVector::empty(minute, config.rssi_bins.len(), config.stations.len());
    for (i, s) in config.stations.iter().enumerate() {
        if stations.contains(s) {
            fv.station_ids[i] = 1;
        }
    }
    if records.is_empty() {
        return fv;
    }
    fv.mac_num = records
        .iter()
        .map(|r| r.effective_source())
        .collect::<BTreeSet<_>>()
        .len();
    fv.source_random_num = records.iter().filter(|r| r.source.is_randomized()).count();
    fv.data_rate_mean = mean(records.iter().map(|r| r.data_rate_mbps));
    fv.ssid_none_num = records.iter().filter(|r| r.ssid == Ssid::Empty).count();
    fv.ssid_missing_num = records.iter().filter(|r| r.ssid == Ssid::Missing).count();
    fv.captured_length_mean = mean(records.iter().map(|r| f64::from(r.captured_length)));
    fv.duration_mean = mean(records.iter().map(|r| f64::from(r.duration_us)));
    fv.random_bursts = detect_bursts(records, config.burst_gap_us)
        .iter()
        .filter(|b| b.mac.is_randomized() && b.frame_count >= 2)
        .count();
    for r in records {
        if let Some(k) = config.rssi_bins.iter().position(|b| b.contains(r.rssi_dbm)) {
            fv.rssi_bins[k] += 1;
        }
    }
    fv
}

/// Feature vectors for every minute in `[first, last]`, including minutes
/// without frames.
pub fn extract_series(
    capture: &Capture,
    stations_by_minute: &BTreeMap<i64, BTreeSet<String>>,
    (first, last): (i64, i64),
    config: &FeatureConfig,
) -> Vec<FeatureVector> {
    let mut by_minute: HashMap<i64, Vec<&ProbeRecord>> = HashMap::new();
    for r in &capture.records {
        by_minute.entry(r.minute()).or_default().push(r);
    }
    let none = BTreeSet::new();
    (first..=last)
        .map(|m| {
            let recs = by_minute.get(&m).map(Vec::as_slice).unwrap_or(&[]);
            extract_features(m, recs, stations_by_minute.get(&m).unwrap_or(&none), config)
        })
        .collect()
}

/// Numeric feature matrix keyed by minute, as read from or written to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub minutes: Vec<i64>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn from_vectors(vectors: &[FeatureVector], config: &FeatureConfig) -> Self {
        FeatureTable {
            columns: config.column_names(),
            minutes: vectors.iter().map(|v| v.minute).collect(),
            rows: vectors.iter().map(FeatureVector::to_row).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("minute_epoch");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (m, row) in self.minutes.iter().zip(&self.rows) {
            let _ = write!(out, "{m}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::EmptyInput)?;
        let mut cols = header.split(',').map(|c| c.trim().to_string());
        if cols.next().as_deref() != Some("minute_epoch") {
            return Err(Error::schema(1, "first column must be minute_epoch"));
        }
        let columns: Vec<String> = cols.collect();
        let mut minutes = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != columns.len() + 1 {
                return Err(Error::schema(
                    i + 1,
                    format!("expected {} fields, got {}", columns.len() + 1, fields.len()),
                ));
            }
            minutes.push(
                fields[0]
                    .parse()
                    .map_err(|_| Error::schema(i + 1, "bad minute_epoch"))?,
            );
            let row = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| Error::schema(i + 1, format!("bad value `{f}`"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(FeatureTable {
            columns,
            minutes,
            rows,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedSample {
    pub minutes: Vec<i64>,
    /// `(lags + 1) x F`, oldest minute first.
    pub matrix: Vec<Vec<f64>>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowSet {
    pub samples: Vec<WindowedSample>,
    /// Runs of consecutive minutes too short to hold a single window.
    pub short_runs: usize,
}

/// Lagged windows over rows keyed by minute. A sample is emitted for minute
/// `m` when rows exist for every minute `m - lags ..= m` and truth exists at
/// `m`; any gap in the minutes starts a new run.
pub fn windows_from_rows(
    minutes: &[i64],
    rows: &[Vec<f64>],
    truth: &OccupancySeries,
    lags: i64,
) -> Result<WindowSet> {
    if lags < 0 {
        return Err(Error::InvalidArgument(format!("lag count must be >= 0, got {lags}")));
    }
    if minutes.len() != rows.len() {
        return Err(Error::LengthMismatch {
            left: minutes.len(),
            right: rows.len(),
        });
    }
    let lags = lags as usize;
    let mut order: Vec<usize> = (0..minutes.len()).collect();
    order.sort_by_key(|&i| minutes[i]);

    let mut set = WindowSet::default();
    let mut run_start = 0;
    for pos in 0..order.len() {
        let i = order[pos];
        if pos > 0 && minutes[i] != minutes[order[pos - 1]] + 1 {
            if pos - run_start < lags + 1 {
                set.short_runs += 1;
            }
            run_start = pos;
        }
        if pos - run_start < lags {
            continue;
        }
        let Some(y) = truth.get(minutes[i]) else {
            continue;
        };
        let idx = &order[pos - lags..=pos];
        set.samples.push(WindowedSample {
            minutes: idx.iter().map(|&k| minutes[k]).collect(),
            matrix: idx.iter().map(|&k| rows[k].clone()).collect(),
            target: occupancy_to_f64(y),
        });
    }
    if !order.is_empty() && order.len() - run_start < lags + 1 {
        set.short_runs += 1;
    }
    Ok(set)
}

pub fn build_windows(
    features: &[FeatureVector],
    truth: &OccupancySeries,
    lags: i64,
) -> Result<WindowSet> {
    let minutes: Vec<i64> = features.iter().map(|f| f.minute).collect();
    let rows: Vec<Vec<f64>> = features.iter().map(FeatureVector::to_row).collect();
    windows_from_rows(&minutes, &rows, truth, lags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::tests::record;
    use crate::ground_truth::MinuteOccupancy;
    use crate::Occupancy;

    fn refs(v: &[ProbeRecord]) -> Vec<&ProbeRecord> {
        v.iter().collect()
    }

    #[test]
    fn bursts_split_on_gap() {
        let recs: Vec<_> = [0u64, 50_000, 100_000]
            .iter()
            .map(|&t| record(t, "02:00:00:00:00:01", -50))
            .collect();
        let b = detect_bursts(&refs(&recs), DEFAULT_BURST_GAP_US);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].frame_count, 3);
        assert_eq!((b[0].start, b[0].end), (0, 100_000));

        let recs = vec![
            record(0, "02:00:00:00:00:01", -50),
            record(5_000_000, "02:00:00:00:00:01", -50),
        ];
        assert_eq!(detect_bursts(&refs(&recs), DEFAULT_BURST_GAP_US).len(), 2);
    }

    #[test]
    fn gap_equal_to_threshold_stays_in_burst() {
        let recs = vec![
            record(0, "02:00:00:00:00:01", -50),
            record(DEFAULT_BURST_GAP_US, "02:00:00:00:00:01", -50),
        ];
        assert_eq!(detect_bursts(&refs(&recs), DEFAULT_BURST_GAP_US).len(), 1);
    }

    #[test]
    fn empty_minute_convention() {
        let cfg = FeatureConfig::with_stations(["A", "B", "C"]);
        let stations: BTreeSet<String> = ["B".to_string()].into();
        let fv = extract_features(7, &[], &stations, &cfg);
        assert_eq!(fv.mac_num, 0);
        assert_eq!(fv.data_rate_mean, 0.0);
        assert_eq!(fv.rssi_bins, vec![0; 6]);
        assert_eq!(fv.station_ids, vec![0, 1, 0]);
        assert!(fv.to_row().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn four_frames_three_macs() {
        let mut recs = vec![
            record(0, "02:00:00:00:00:01", -57),
            record(100_000, "02:00:00:00:00:01", -50),
            record(1_000_000, "06:00:00:00:00:02", -45),
            record(2_000_000, "00:03:93:00:00:03", -70),
        ];
        recs[0].ssid = Ssid::Missing;
        recs[0].data_rate_mbps = 2.0;
        let cfg = FeatureConfig::default();
        let fv = extract_features(0, &refs(&recs), &BTreeSet::new(), &cfg);
        // Hand count over the four records above.
        assert_eq!(fv.mac_num, 3);
        assert_eq!(fv.source_random_num, 3);
        assert_eq!(fv.ssid_missing_num, 1);
        assert_eq!(fv.ssid_none_num, 3);
        assert_eq!(fv.data_rate_mean, 1.25);
        assert_eq!(fv.random_bursts, 1);
        // -57 -> [-60,-55); -50 -> [-50,-45); -45 -> [-45,-40); -70 unbinned.
        assert_eq!(fv.rssi_bins, vec![1, 0, 1, 1, 0, 0]);
        assert_eq!(fv.rssi_bins.iter().sum::<usize>(), 3);
    }

    #[test]
    fn bin_edges() {
        let bins = default_rssi_bins();
        assert_eq!(bins[0].column_name(), "rssi_60_55");
        assert!(bins[0].contains(-60) && !bins[0].contains(-55));
        assert!(bins[5].contains(0) && bins[5].contains(-35));
    }

    #[test]
    fn random_bursts_can_count_one_mac_twice() {
        let recs = vec![
            record(0, "02:00:00:00:00:01", -50),
            record(100_000, "02:00:00:00:00:01", -50),
            record(10_000_000, "02:00:00:00:00:01", -50),
            record(10_100_000, "02:00:00:00:00:01", -50),
        ];
        let fv = extract_features(0, &refs(&recs), &BTreeSet::new(), &FeatureConfig::default());
        assert_eq!(fv.random_bursts, 2);
        assert_eq!(fv.mac_num, 1);
    }

    fn series(minutes: std::ops::Range<i64>) -> OccupancySeries {
        OccupancySeries::new(
            minutes
                .map(|m| MinuteOccupancy {
                    minute: m,
                    occupancy: Occupancy::from_integer(m),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn window_counts() {
        let fvs: Vec<_> = (100..112).map(|m| FeatureVector::empty(m, 6, 0)).collect();
        let truth = series(100..112);
        let w0 = build_windows(&fvs, &truth, 0).unwrap();
        assert_eq!(w0.samples.len(), 12);
        assert_eq!(w0.samples[0].matrix.len(), 1);
        let w6 = build_windows(&fvs, &truth, 6).unwrap();
        assert_eq!(w6.samples.len(), 6);
        assert_eq!(w6.samples[0].minutes, (100..107).collect::<Vec<_>>());
        assert_eq!(w6.samples[0].target, 106.0);
        let w12 = build_windows(&fvs, &truth, 12).unwrap();
        assert!(w12.samples.is_empty());
        assert_eq!(w12.short_runs, 1);
        assert!(build_windows(&fvs, &truth, -1).is_err());
    }

    #[test]
    fn gaps_split_runs() {
        let mut fvs: Vec<_> = (0..5).map(|m| FeatureVector::empty(m, 6, 0)).collect();
        fvs.extend((10..15).map(|m| FeatureVector::empty(m, 6, 0)));
        let truth = series(0..20);
        let w = build_windows(&fvs, &truth, 2).unwrap();
        assert_eq!(w.samples.len(), 6);
        for s in &w.samples {
            assert!(s.minutes.windows(2).all(|p| p[1] == p[0] + 1));
        }
    }

    #[test]
    fn table_csv_round_trip() {
        let cfg = FeatureConfig::with_stations(["Government Center", "Third Street"]);
        let mut fv = FeatureVector::empty(5, 6, 2);
        fv.data_rate_mean = 5.5;
        fv.station_ids[1] = 1;
        let table = FeatureTable::from_vectors(&[fv], &cfg);
        assert_eq!(table.columns.last().unwrap(), "station_third_street");
        let back = FeatureTable::parse_csv(&table.to_csv()).unwrap();
        assert_eq!(back, table);
    }
}
