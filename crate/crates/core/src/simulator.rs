//! Seeded generator of labeled vehicle trips.
//!
//! A trip is one pass over the station sequence. Passengers board and alight
//! at every stop, carry zero or more devices, and those devices emit probe
//! request bursts while on board. A randomizing device draws a new
//! locally administered address for every burst. Around the vehicle the
//! generator adds ambient devices (mostly far away), people waiting on
//! platforms during dwells, infrastructure frames, directed probes and
//! multicast-sourced frames, so that every filter step has something to do.
//!
//! Configuration is TOML key-value text; every key is optional:
//!
//! ```toml
//! seed = 42
//! trips = 12
//! date = "2023-01-01"
//! start_time = "06:00:00"
//! headway_s = 90.0
//! capacity = 90
//! randomized_prob = 0.975
//! probe_cadence_s = 3.0
//! noise_rate_per_min = 150.0
//! planted = false
//!
//! [[stations]]
//! name = "GOVERNMENT CENTER"
//! travel_s = 60.0
//! dwell_s = 30.0
//! arrival_rate_per_min = 2.0
//! alight_prob = 0.1
//! ```
//!
//! Without `[[stations]]` the bundled 20-stop OMNI loop is used, with
//! arrival rates and alighting probabilities taken from its count form.
//!
//! In planted mode only clean on-board probe requests are emitted, all at
//! RSSI of at least -60 dBm, and the training target of every minute is
//! three times the number of distinct source addresses seen in it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Geometric, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capture::{Capture, ProbeRecord, Ssid, MICROS_PER_MINUTE};
use crate::error::{Error, Result};
use crate::ground_truth::{
    aggregate_occupancy, parse_count_form, ClockTime, CountForm, FormHeader, FormRow,
    MinuteOccupancy, OccupancySeries,
};
use crate::mac::MacAddress;
use crate::oui::OuiTable;
use crate::seed;
use crate::Occupancy;

const OMNI_FORM: &str = include_str!("../data/omni_count_form.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSpec {
    pub name: String,
    /// Travel time to the next stop.
    pub travel_s: f64,
    pub dwell_s: f64,
    pub arrival_rate_per_min: f64,
    pub alight_prob: f64,
}

/// The OMNI loop: stop order and dwell/travel times from the bundled count
/// form, boarding rates scaled so one 90 s headway yields the recorded
/// boardings, alighting probabilities as recorded alightings over load.
pub fn default_stations() -> Vec<StationSpec> {
    let form = parse_count_form(OMNI_FORM).expect("bundled form parses");
    let n = form.rows.len();
    (0..n)
        .map(|k| {
            let row = &form.rows[k];
            let dwell = f64::from(row.departure.second_of_day - row.arrival.second_of_day);
            let travel = if k + 1 < n {
                f64::from(form.rows[k + 1].arrival.second_of_day.saturating_sub(row.departure.second_of_day))
            } else {
                60.0
            };
            let before = form.arrival_load(k);
            StationSpec {
                name: row.station_name.clone(),
                travel_s: travel.max(30.0),
                dwell_s: dwell.max(20.0),
                arrival_rate_per_min: row.on as f64 / 1.5,
                alight_prob: if before > 0 { row.off as f64 / before as f64 } else { 0.0 },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub trips: usize,
    pub line_id: String,
    pub date: String,
    pub start_time: String,
    /// Pause between consecutive trips.
    pub layover_s: f64,
    pub headway_s: f64,
    pub capacity: i64,
    pub initial_load_mean: f64,
    /// Probabilities of a passenger carrying 0, 1 and 2 devices.
    pub device_ownership: [f64; 3],
    pub randomized_prob: f64,
    /// Long-run share of time a device is in use.
    pub in_use_prob: f64,
    /// Mean length of an in-use spell; zero fixes the state per device.
    pub in_use_mean_s: f64,
    /// Mean seconds per probe frame of an in-use device.
    pub probe_cadence_s: f64,
    pub idle_burst_rate_per_min: f64,
    pub burst_mean: f64,
    pub burst_max: u32,
    pub intra_burst_gap_ms: [f64; 2],
    pub onboard_rssi_mean: f64,
    pub onboard_rssi_sd: f64,
    pub frame_rssi_jitter_sd: f64,
    pub directed_probe_prob: f64,
    pub noise_rate_per_min: f64,
    /// Share of ambient frames drawn from `noise_far_rssi`.
    pub noise_far_fraction: f64,
    pub noise_far_rssi: [i32; 2],
    pub noise_near_rssi: [i32; 2],
    pub platform_mean: f64,
    pub platform_rssi_mean: f64,
    pub platform_rssi_sd: f64,
    pub infrastructure_rate_per_min: f64,
    pub multicast_rate_per_min: f64,
    pub planted: bool,
    pub stations: Vec<StationSpec>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 42,
            trips: 12,
            line_id: "OMNI".into(),
            date: "2023-01-01".into(),
            start_time: "06:00:00".into(),
            layover_s: 60.0,
            headway_s: 90.0,
            capacity: 90,
            initial_load_mean: 30.0,
            device_ownership: [0.15, 0.75, 0.10],
            randomized_prob: 0.975,
            in_use_prob: 0.6,
            in_use_mean_s: 120.0,
            probe_cadence_s: 3.0,
            idle_burst_rate_per_min: 0.5,
            burst_mean: 3.0,
            burst_max: 8,
            intra_burst_gap_ms: [20.0, 120.0],
            onboard_rssi_mean: -48.0,
            onboard_rssi_sd: 4.0,
            frame_rssi_jitter_sd: 2.0,
            directed_probe_prob: 0.05,
            noise_rate_per_min: 150.0,
            noise_far_fraction: 0.97,
            noise_far_rssi: [-95, -81],
            noise_near_rssi: [-80, -50],
            platform_mean: 6.0,
            platform_rssi_mean: -65.0,
            platform_rssi_sd: 4.0,
            infrastructure_rate_per_min: 30.0,
            multicast_rate_per_min: 5.0,
            planted: false,
            stations: default_stations(),
        }
    }
}

fn prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be >= 0, got {v}")))
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Same settings with only clean on-board traffic.
    pub fn planted(mut self) -> Self {
        self.planted = true;
        self
    }

    fn start(&self) -> Result<(NaiveDate, ClockTime)> {
        let date = NaiveDate::parse_from_str(&self.date, "%Y-%m-%d")
            .map_err(|e| Error::Config(format!("bad date `{}`: {e}", self.date)))?;
        let time = ClockTime::parse(&self.start_time)
            .ok_or_else(|| Error::Config(format!("bad start_time `{}`", self.start_time)))?;
        Ok((date, time))
    }

    pub fn trip_duration_s(&self) -> f64 {
        let n = self.stations.len();
        self.stations
            .iter()
            .enumerate()
            .map(|(k, s)| s.dwell_s + if k + 1 < n { s.travel_s } else { 0.0 })
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stations.is_empty() {
            return Err(Error::Config("at least one station is required".into()));
        }
        if self.capacity < 1 {
            return Err(Error::Config(format!("capacity must be >= 1, got {}", self.capacity)));
        }
        for p in [
            ("randomized_prob", self.randomized_prob),
            ("in_use_prob", self.in_use_prob),
            ("directed_probe_prob", self.directed_probe_prob),
            ("noise_far_fraction", self.noise_far_fraction),
        ] {
            prob(p.0, p.1)?;
        }
        for (i, &p) in self.device_ownership.iter().enumerate() {
            prob(&format!("device_ownership[{i}]"), p)?;
        }
        if (self.device_ownership.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("device_ownership must sum to 1".into()));
        }
        for v in [
            ("initial_load_mean", self.initial_load_mean),
            ("idle_burst_rate_per_min", self.idle_burst_rate_per_min),
            ("noise_rate_per_min", self.noise_rate_per_min),
            ("platform_mean", self.platform_mean),
            ("infrastructure_rate_per_min", self.infrastructure_rate_per_min),
            ("multicast_rate_per_min", self.multicast_rate_per_min),
            ("layover_s", self.layover_s),
            ("in_use_mean_s", self.in_use_mean_s),
            ("onboard_rssi_sd", self.onboard_rssi_sd),
            ("frame_rssi_jitter_sd", self.frame_rssi_jitter_sd),
            ("platform_rssi_sd", self.platform_rssi_sd),
        ] {
            non_negative(v.0, v.1)?;
        }
        if !(self.headway_s > 0.0 && self.probe_cadence_s > 0.0) {
            return Err(Error::Config("headway_s and probe_cadence_s must be > 0".into()));
        }
        if !(self.burst_mean >= 1.0) || self.burst_max < 1 {
            return Err(Error::Config("burst_mean must be >= 1 and burst_max >= 1".into()));
        }
        let [g0, g1] = self.intra_burst_gap_ms;
        if !(g0 > 0.0 && g1 >= g0) {
            return Err(Error::Config("intra_burst_gap_ms must be an increasing positive range".into()));
        }
        for r in [self.noise_far_rssi, self.noise_near_rssi] {
            if r[0] > r[1] {
                return Err(Error::Config(format!("RSSI range {r:?} is reversed")));
            }
        }
        if self.initial_load_mean > self.capacity as f64 {
            return Err(Error::Config("initial_load_mean exceeds capacity".into()));
        }
        for s in &self.stations {
            if !(s.travel_s > 0.0 && s.dwell_s > 0.0) {
                return Err(Error::Config(format!(
                    "station `{}` needs positive travel and dwell times",
                    s.name
                )));
            }
            prob(&format!("alight_prob of `{}`", s.name), s.alight_prob)?;
            non_negative("arrival_rate_per_min", s.arrival_rate_per_min)?;
            if s.arrival_rate_per_min * self.headway_s / 60.0 > self.capacity as f64 {
                return Err(Error::Config(format!(
                    "boarding demand at `{}` exceeds capacity",
                    s.name
                )));
            }
        }
        let (_, start) = self.start()?;
        let end = f64::from(start.second_of_day)
            + self.trips as f64 * (self.trip_duration_s() + self.layover_s);
        if end >= 86_400.0 {
            return Err(Error::Config("trips run past midnight".into()));
        }
        Ok(())
    }

    pub fn station_names(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.stations
            .iter()
            .filter(|s| seen.insert(s.name.clone()))
            .map(|s| s.name.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameOrigin {
    Onboard,
    Platform,
    Ambient,
    Infrastructure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameLabel {
    pub timestamp_us: u64,
    pub source: MacAddress,
    pub origin: FrameOrigin,
    pub device: Option<u64>,
    pub passenger: Option<u64>,
    pub burst: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrip {
    pub capture: Capture,
    pub count_form: CountForm,
    /// Per-minute occupancy computed from the boarding ledger.
    pub occupancy: OccupancySeries,
    /// Training target: `occupancy`, or the planted function.
    pub target: OccupancySeries,
    pub onboard_devices: BTreeMap<i64, usize>,
    /// One label per capture record, in record order.
    pub labels: Vec<FrameLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub trips: Vec<SimTrip>,
}

#[derive(Clone, Copy)]
struct Profile {
    rate: f64,
    length: (u32, u32),
    /// Probabilities of a missing and an empty SSID; the rest is named.
    ssid: (f64, f64),
}

const PROFILES: [Profile; 5] = [
    Profile { rate: 1.0, length: (120, 140), ssid: (0.0, 0.9) },
    Profile { rate: 6.0, length: (180, 220), ssid: (0.1, 0.8) },
    Profile { rate: 24.0, length: (240, 280), ssid: (0.0, 1.0) },
    Profile { rate: 1.0, length: (90, 110), ssid: (0.3, 0.7) },
    Profile { rate: 12.0, length: (150, 170), ssid: (0.0, 0.95) },
];

const NAMED_SSIDS: [&str; 4] = ["MetroFree", "HomeNet", "CoffeeShop", "Office-5G"];

fn duration_us(length: u32, rate: f64) -> u32 {
    let preamble = if rate <= 2.0 { 192.0 } else { 20.0 };
    (f64::from(length) * 8.0 / rate + preamble).ceil() as u32
}

fn random_local_mac(rng: &mut ChaCha8Rng) -> MacAddress {
    let mut o: [u8; 6] = rng.random();
    o[0] = (o[0] & 0xfc) | 0x02;
    MacAddress::new(o)
}

struct Device {
    id: u64,
    passenger: Option<u64>,
    origin: FrameOrigin,
    randomized: bool,
    fixed_mac: MacAddress,
    in_use: bool,
    switching: bool,
    profile: Profile,
    rssi_base: f64,
}

struct Frame {
    record: ProbeRecord,
    label: FrameLabel,
}

struct TripBuilder<'a> {
    cfg: &'a SimConfig,
    rng: ChaCha8Rng,
    vendors: Vec<[u8; 3]>,
    frames: Vec<Frame>,
    next_device: u64,
    next_burst: u64,
    access_points: Vec<MacAddress>,
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("positive mean").sample(rng) as u64
    }
}

impl<'a> TripBuilder<'a> {
    fn new(cfg: &'a SimConfig, rng: ChaCha8Rng) -> Self {
        let mut vendors: Vec<[u8; 3]> = OuiTable::bundled().prefixes().copied().collect();
        vendors.sort_unstable();
        let mut b = TripBuilder {
            cfg,
            rng,
            vendors,
            frames: Vec::new(),
            next_device: 0,
            next_burst: 0,
            access_points: Vec::new(),
        };
        b.access_points = (0..4)
            .map(|_| {
                let mut o: [u8; 6] = b.rng.random();
                o[0] = 0x00;
                o[1] = 0x1a;
                o[2] = 0x1e;
                MacAddress::new(o)
            })
            .collect();
        b
    }

    fn vendor_mac(&mut self) -> MacAddress {
        let p = self.vendors[self.rng.random_range(0..self.vendors.len())];
        let tail: [u8; 3] = self.rng.random();
        MacAddress::new([p[0], p[1], p[2], tail[0], tail[1], tail[2]])
    }

    fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        if sd <= 0.0 {
            mean
        } else {
            Normal::new(mean, sd).expect("finite sd").sample(&mut self.rng)
        }
    }

    fn device(&mut self, origin: FrameOrigin, passenger: Option<u64>, rssi_mean: f64, rssi_sd: f64) -> Device {
        let id = self.next_device;
        self.next_device += 1;
        let randomized = self.rng.random_bool(self.cfg.randomized_prob);
        let fixed_mac = self.vendor_mac();
        let in_use = self.rng.random_bool(self.cfg.in_use_prob);
        let profile = PROFILES[self.rng.random_range(0..PROFILES.len())];
        let rssi_base = self.normal(rssi_mean, rssi_sd);
        Device {
            id,
            passenger,
            origin,
            randomized,
            fixed_mac,
            in_use,
            switching: true,
            profile,
            rssi_base,
        }
    }

    fn burst_size(&mut self) -> u32 {
        let p = 1.0 / self.cfg.burst_mean;
        let extra = if p >= 1.0 {
            0
        } else {
            Geometric::new(p).expect("valid p").sample(&mut self.rng)
        };
        (extra + 1).min(u64::from(self.cfg.burst_max)) as u32
    }

    fn frame_rssi(&mut self, dev: &Device) -> i32 {
        let v = self.normal(dev.rssi_base, self.cfg.frame_rssi_jitter_sd).round();
        let v = v.clamp(-100.0, -20.0) as i32;
        if self.cfg.planted {
            v.max(-60)
        } else {
            v
        }
    }

    /// Bursts of one device over `[t0, t1)` in microseconds. A switching
    /// device alternates between in-use and idle spells of exponential
    /// length whose means keep it in use for `in_use_prob` of the time.
    fn emit_device(&mut self, dev: &Device, t0: u64, t1: u64) {
        let p = self.cfg.in_use_prob;
        let busy_mean = self.cfg.in_use_mean_s * 1e6;
        let switching = dev.switching && busy_mean > 0.0 && p > 0.0 && p < 1.0;
        let mut in_use = dev.in_use;
        let mut t = t0;
        while t < t1 {
            let end = if switching {
                let mean = if in_use { busy_mean } else { busy_mean * (1.0 - p) / p };
                let spell = Exp::new(1.0 / mean).expect("positive mean").sample(&mut self.rng);
                (t as f64 + spell).min(t1 as f64) as u64
            } else {
                t1
            };
            self.emit_spell(dev, in_use, t, end.max(t + 1), t1);
            t = end.max(t + 1);
            in_use = !in_use;
        }
    }

    /// Burst starts over `[t0, t1)`; frames may run on until `limit`.
    fn emit_spell(&mut self, dev: &Device, in_use: bool, t0: u64, t1: u64, limit: u64) {
        let per_min = if in_use {
            60.0 / (self.cfg.probe_cadence_s * self.cfg.burst_mean)
        } else {
            self.cfg.idle_burst_rate_per_min
        };
        if per_min <= 0.0 || t1 <= t0 {
            return;
        }
        let gap = Exp::new(per_min / 60e6).expect("positive rate");
        let mut t = t0 as f64 + gap.sample(&mut self.rng);
        while t < t1 as f64 {
            self.emit_burst(dev, t as u64, limit);
            t += gap.sample(&mut self.rng);
        }
    }

    fn emit_burst(&mut self, dev: &Device, start: u64, t1: u64) {
        let burst = self.next_burst;
        self.next_burst += 1;
        let mac = if dev.randomized { random_local_mac(&mut self.rng) } else { dev.fixed_mac };
        let size = self.burst_size();
        let length = self.rng.random_range(dev.profile.length.0..=dev.profile.length.1);
        let u: f64 = self.rng.random();
        let (miss, empty) = dev.profile.ssid;
        let ssid = if u < miss {
            Ssid::Missing
        } else if u < miss + empty {
            Ssid::Empty
        } else {
            Ssid::Named(NAMED_SSIDS[self.rng.random_range(0..NAMED_SSIDS.len())].to_string())
        };
        let directed = !self.cfg.planted
            && dev.origin != FrameOrigin::Ambient
            && self.rng.random_bool(self.cfg.directed_probe_prob);
        let destination = if directed {
            self.access_points[self.rng.random_range(0..self.access_points.len())]
        } else {
            MacAddress::BROADCAST
        };
        let [g0, g1] = self.cfg.intra_burst_gap_ms;
        let mut t = start;
        for i in 0..size {
            if i > 0 {
                t += (self.rng.random_range(g0..=g1) * 1000.0) as u64;
            }
            if t >= t1 {
                break;
            }
            let rssi = if dev.origin == FrameOrigin::Ambient {
                self.ambient_rssi()
            } else {
                self.frame_rssi(dev)
            };
            self.frames.push(Frame {
                record: ProbeRecord {
                    timestamp_us: t,
                    frame_type: 0,
                    subtype: 4,
                    source: mac,
                    destination,
                    rssi_dbm: rssi,
                    data_rate_mbps: dev.profile.rate,
                    ssid: if directed { Ssid::Named(NAMED_SSIDS[0].into()) } else { ssid.clone() },
                    captured_length: length,
                    duration_us: duration_us(length, dev.profile.rate),
                    representative: None,
                    passenger: None,
                },
                label: FrameLabel {
                    timestamp_us: t,
                    source: mac,
                    origin: dev.origin,
                    device: Some(dev.id),
                    passenger: dev.passenger,
                    burst: Some(burst),
                },
            });
        }
    }

    fn ambient_rssi(&mut self) -> i32 {
        let r = if self.rng.random_bool(self.cfg.noise_far_fraction) {
            self.cfg.noise_far_rssi
        } else {
            self.cfg.noise_near_rssi
        };
        self.rng.random_range(r[0]..=r[1])
    }

    fn poisson_times(&mut self, per_min: f64, t0: u64, t1: u64) -> Vec<u64> {
        if per_min <= 0.0 || t1 <= t0 {
            return Vec::new();
        }
        let gap = Exp::new(per_min / 60e6).expect("positive rate");
        let mut out = Vec::new();
        let mut t = t0 as f64 + gap.sample(&mut self.rng);
        while t < t1 as f64 {
            out.push(t as u64);
            t += gap.sample(&mut self.rng);
        }
        out
    }

    fn ambient(&mut self, t0: u64, t1: u64) {
        for t in self.poisson_times(self.cfg.noise_rate_per_min / self.cfg.burst_mean, t0, t1) {
            let dev = self.device(FrameOrigin::Ambient, None, -85.0, 0.0);
            self.emit_burst(&dev, t, t1);
        }
    }

    fn infrastructure(&mut self, t0: u64, t1: u64) {
        for t in self.poisson_times(self.cfg.infrastructure_rate_per_min, t0, t1) {
            let ap = self.access_points[self.rng.random_range(0..self.access_points.len())];
            let beacon = self.rng.random_bool(0.5);
            self.push_misc(t, ap, MacAddress::BROADCAST, if beacon { (0, 8) } else { (2, 0) }, -70);
        }
        for t in self.poisson_times(self.cfg.multicast_rate_per_min, t0, t1) {
            let tail: [u8; 3] = self.rng.random();
            let src = MacAddress::new([0x01, 0x00, 0x5e, tail[0] & 0x7f, tail[1], tail[2]]);
            let rssi = self.rng.random_range(-70..=-40);
            self.push_misc(t, src, MacAddress::BROADCAST, (0, 4), rssi);
        }
    }

    fn push_misc(&mut self, t: u64, source: MacAddress, destination: MacAddress, kind: (u8, u8), rssi: i32) {
        self.frames.push(Frame {
            record: ProbeRecord {
                timestamp_us: t,
                frame_type: kind.0,
                subtype: kind.1,
                source,
                destination,
                rssi_dbm: rssi + self.rng.random_range(-5..=5),
                data_rate_mbps: 1.0,
                ssid: Ssid::Missing,
                captured_length: 100,
                duration_us: duration_us(100, 1.0),
                representative: None,
                passenger: None,
            },
            label: FrameLabel {
                timestamp_us: t,
                source,
                origin: FrameOrigin::Infrastructure,
                device: None,
                passenger: None,
                burst: None,
            },
        });
    }
}

struct Stop {
    arrival_us: u64,
    departure_us: u64,
    on: i64,
    off: i64,
    load: i64,
}

struct Rider {
    id: u64,
    board_us: u64,
    alight_us: Option<u64>,
}

fn simulate_trip(cfg: &SimConfig, index: usize, date: NaiveDate, start: ClockTime) -> Result<SimTrip> {
    let mut b = TripBuilder::new(cfg, seed::rng_indexed(cfg.seed, "trip", index as u64));
    let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid date");
    let day_us = date.signed_duration_since(epoch).num_days() as u64 * 86_400 * 1_000_000;
    let offset_s = f64::from(start.second_of_day) + index as f64 * (cfg.trip_duration_s() + cfg.layover_s);
    let trip_start_us = day_us + (offset_s * 1e6).round() as u64;

    // Vehicle schedule.
    let mut stops: Vec<Stop> = Vec::with_capacity(cfg.stations.len());
    let mut t = trip_start_us;
    for s in &cfg.stations {
        let dep = t + (s.dwell_s * 1e6).round() as u64;
        stops.push(Stop {
            arrival_us: t,
            departure_us: dep,
            on: 0,
            off: 0,
            load: 0,
        });
        t = dep + (s.travel_s * 1e6).round() as u64;
    }
    let trip_end_us = stops.last().expect("stations").departure_us;

    // Boarding ledger.
    let initial = poisson(&mut b.rng, cfg.initial_load_mean).min(cfg.capacity as u64) as i64;
    let mut riders: Vec<Rider> = (0..initial as u64)
        .map(|id| Rider {
            id,
            board_us: trip_start_us,
            alight_us: None,
        })
        .collect();
    let mut next_rider = initial as u64;
    let mut load = initial;
    for (k, s) in cfg.stations.iter().enumerate() {
        let (arr, dep) = (stops[k].arrival_us, stops[k].departure_us);
        let mut off = 0;
        for r in riders.iter_mut().filter(|r| r.alight_us.is_none()) {
            if b.rng.random_bool(s.alight_prob) {
                r.alight_us = Some(b.rng.random_range(arr..=dep));
                off += 1;
            }
        }
        load -= off;
        let waiting = poisson(&mut b.rng, s.arrival_rate_per_min * cfg.headway_s / 60.0) as i64;
        let on = waiting.min(cfg.capacity - load);
        for _ in 0..on {
            riders.push(Rider {
                id: next_rider,
                board_us: b.rng.random_range(arr..=dep),
                alight_us: None,
            });
            next_rider += 1;
        }
        load += on;
        stops[k].on = on;
        stops[k].off = off;
        stops[k].load = load;
    }

    // On-board devices.
    let mut onboard_devices: BTreeMap<i64, usize> = BTreeMap::new();
    let weights = cfg.device_ownership;
    for r in &riders {
        let u: f64 = b.rng.random();
        let n_dev = if u < weights[0] {
            0
        } else if u < weights[0] + weights[1] {
            1
        } else {
            2
        };
        let end = r.alight_us.unwrap_or(trip_end_us);
        for _ in 0..n_dev {
            let dev = b.device(FrameOrigin::Onboard, Some(r.id), cfg.onboard_rssi_mean, cfg.onboard_rssi_sd);
            b.emit_device(&dev, r.board_us, end);
            for m in (r.board_us / MICROS_PER_MINUTE)..=(end / MICROS_PER_MINUTE) {
                *onboard_devices.entry(m as i64).or_default() += 1;
            }
        }
    }

    if !cfg.planted {
        for stop in &stops {
            let n = poisson(&mut b.rng, cfg.platform_mean);
            for _ in 0..n {
                let dev = b.device(FrameOrigin::Platform, None, cfg.platform_rssi_mean, cfg.platform_rssi_sd);
                b.emit_device(&dev, stop.arrival_us, stop.departure_us);
            }
        }
        b.ambient(trip_start_us, trip_end_us);
        b.infrastructure(trip_start_us, trip_end_us);
    }

    let mut frames = std::mem::take(&mut b.frames);
    frames.sort_by_key(|f| f.record.timestamp_us);
    let (records, labels): (Vec<ProbeRecord>, Vec<FrameLabel>) =
        frames.into_iter().map(|f| (f.record, f.label)).unzip();
    let capture = Capture::new(format!("trip{index:03}"), cfg.line_id.clone(), records)?;

    let clock = |us: u64| ClockTime {
        second_of_day: ((us - day_us) / 1_000_000) as u32,
    };
    let header = FormHeader {
        checker: "simulator".into(),
        route: cfg.line_id.clone(),
        direction: "loop".into(),
        date,
        start_station: cfg.stations[0].name.clone(),
        seats: 0,
        capacity: cfg.capacity,
        on_board_initial: initial,
    };
    let rows: Vec<FormRow> = stops
        .iter()
        .enumerate()
        .map(|(k, s)| FormRow {
            stop_index: k as u32 + 1,
            station_name: cfg.stations[k].name.clone(),
            transfer: String::new(),
            arrival: clock(s.arrival_us),
            departure: clock(s.departure_us),
            on: s.on,
            off: s.off,
            load: s.load,
        })
        .collect();
    let count_form = CountForm::new(header, rows)?;
    let occupancy = ledger_occupancy(initial, &stops);
    let target = if cfg.planted {
        planted_target(&capture, &occupancy)
    } else {
        occupancy.clone()
    };
    Ok(SimTrip {
        capture,
        count_form,
        occupancy,
        target,
        onboard_devices,
        labels,
    })
}

/// Minute occupancy from the vehicle's own stop ledger: while the vehicle
/// is at one or more stops during a minute, the loads before and after each
/// of those stops are averaged; between stops the load after the last
/// departure holds.
fn ledger_occupancy(initial: i64, stops: &[Stop]) -> OccupancySeries {
    let minute = |us: u64| (us / MICROS_PER_MINUTE) as i64;
    let mut per_minute: BTreeMap<i64, (i64, i64)> = BTreeMap::new();
    let mut before = initial;
    for s in stops {
        for m in minute(s.arrival_us)..=minute(s.departure_us) {
            let e = per_minute.entry(m).or_default();
            e.0 += before + s.load;
            e.1 += 2;
        }
        before = s.load;
    }
    let first = minute(stops[0].arrival_us);
    let last = minute(stops.last().expect("stops").departure_us);
    let mut entries = Vec::new();
    let mut held = initial;
    let mut k = 0;
    for m in first..=last {
        while k < stops.len() && minute(stops[k].departure_us) < m {
            held = stops[k].load;
            k += 1;
        }
        let occupancy = match per_minute.get(&m) {
            Some(&(sum, n)) => Occupancy::new(sum, n),
            None => Occupancy::from_integer(held),
        };
        entries.push(MinuteOccupancy { minute: m, occupancy });
    }
    OccupancySeries { entries }
}

fn planted_target(capture: &Capture, occupancy: &OccupancySeries) -> OccupancySeries {
    let mut macs: BTreeMap<i64, BTreeSet<MacAddress>> = BTreeMap::new();
    for r in &capture.records {
        macs.entry(r.minute()).or_default().insert(r.source);
    }
    OccupancySeries {
        entries: occupancy
            .entries
            .iter()
            .map(|e| MinuteOccupancy {
                minute: e.minute,
                occupancy: Occupancy::from_integer(3 * macs.get(&e.minute).map_or(0, BTreeSet::len) as i64),
            })
            .collect(),
    }
}

pub fn simulate(config: &SimConfig) -> Result<SimRun> {
    config.validate()?;
    let (date, start) = config.start()?;
    let trips = (0..config.trips)
        .into_par_iter()
        .map(|k| simulate_trip(config, k, date, start))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimRun { trips })
}

/// Frames of one isolated device riding over `[t0, t1)` with its use state
/// held fixed, with burst ids.
pub fn simulate_device(
    config: &SimConfig,
    t0: u64,
    t1: u64,
    in_use: bool,
    randomized: bool,
    seed_value: u64,
) -> Vec<(ProbeRecord, u64)> {
    let mut b = TripBuilder::new(config, seed::rng(seed_value, "single-device"));
    let mut dev = b.device(FrameOrigin::Onboard, Some(0), config.onboard_rssi_mean, config.onboard_rssi_sd);
    dev.in_use = in_use;
    dev.switching = false;
    dev.randomized = randomized;
    b.emit_device(&dev, t0, t1);
    b.frames
        .into_iter()
        .map(|f| (f.record, f.label.burst.expect("device frames have bursts")))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReplayReport {
    pub failures: Vec<String>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Consistency checks of a trip: every frame labeled, one address per
/// burst, a telescoping count form within capacity, and ledger occupancy
/// equal to the count-form aggregation.
pub fn replay_check(trip: &SimTrip) -> ReplayReport {
    let mut failures = Vec::new();
    let recs = &trip.capture.records;
    if recs.len() != trip.labels.len() {
        failures.push(format!(
            "label coverage: {} frames but {} labels",
            recs.len(),
            trip.labels.len()
        ));
    } else if let Some(i) = recs
        .iter()
        .zip(&trip.labels)
        .position(|(r, l)| r.timestamp_us != l.timestamp_us || r.source != l.source)
    {
        failures.push(format!("label coverage: frame {i} does not match its label"));
    }
    let mut burst_mac: BTreeMap<u64, MacAddress> = BTreeMap::new();
    for (r, l) in recs.iter().zip(&trip.labels) {
        if let Some(b) = l.burst {
            let mac = *burst_mac.entry(b).or_insert(r.source);
            if mac != r.source {
                failures.push(format!("burst {b} uses more than one source address"));
            }
        }
    }
    for issue in trip.count_form.check() {
        failures.push(format!("count form: {issue:?}"));
    }
    let aggregated = aggregate_occupancy(&trip.count_form);
    if aggregated != trip.occupancy {
        failures.push("ledger occupancy differs from count-form aggregation".into());
    }
    let cap = Occupancy::from_integer(trip.count_form.header.capacity);
    if trip.occupancy.entries.iter().any(|e| e.occupancy > cap) {
        failures.push("occupancy exceeds capacity".into());
    }
    ReplayReport { failures }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TruthLine<'a> {
    Frame {
        index: usize,
        #[serde(flatten)]
        label: &'a FrameLabel,
    },
    Minute {
        minute: i64,
        occupancy: f64,
        occupancy_exact: String,
        target: f64,
        onboard_devices: usize,
    },
}

/// Frame labels followed by per-minute truth, one JSON object per line.
pub fn truth_jsonl(trip: &SimTrip) -> Result<String> {
    let mut out = String::new();
    for (index, label) in trip.labels.iter().enumerate() {
        out.push_str(&serde_json::to_string(&TruthLine::Frame { index, label })?);
        out.push('\n');
    }
    for e in &trip.occupancy.entries {
        let target = trip.target.get(e.minute).unwrap_or(e.occupancy);
        let line = TruthLine::Minute {
            minute: e.minute,
            occupancy: crate::ground_truth::occupancy_to_f64(e.occupancy),
            occupancy_exact: e.occupancy.to_string(),
            target: crate::ground_truth::occupancy_to_f64(target),
            onboard_devices: trip.onboard_devices.get(&e.minute).copied().unwrap_or(0),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes `trip_NNN/{capture.jsonl,count_form.csv,truth.jsonl,target.csv}`
/// per trip plus a `manifest.txt` listing the trip directories.
pub fn write_run(run: &SimRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    for (k, trip) in run.trips.iter().enumerate() {
        let sub = dir.join(format!("trip_{k:03}"));
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        trip.capture.write_jsonl(&sub.join("capture.jsonl"))?;
        trip.count_form.write(&sub.join("count_form.csv"))?;
        let truth = sub.join("truth.jsonl");
        std::fs::write(&truth, truth_jsonl(trip)?).map_err(|e| Error::io(&truth, e))?;
        trip.target.write(&sub.join("target.csv"))?;
        let _ = writeln!(manifest, "trip_{k:03}\t{}", trip.capture.session_id);
    }
    let path = dir.join("manifest.txt");
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            trips: 2,
            ..SimConfig::default()
        }
    }

    #[test]
    fn default_stations_follow_bundled_form() {
        let s = default_stations();
        assert_eq!(s.len(), 20);
        assert_eq!(s[0].name, "GOVERNMENT CENTER");
        assert_eq!(s[1].arrival_rate_per_min * 1.5, 8.0);
        assert!(s.iter().all(|x| x.dwell_s > 0.0 && x.travel_s > 0.0));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = small();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(SimConfig::from_toml_str(&text).unwrap(), cfg);
        let partial = SimConfig::from_toml_str("seed = 7\ntrips = 3\n").unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.stations.len(), 20);
        assert!(SimConfig::from_toml_str("bogus = 1").is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = small();
        cfg.stations[3].dwell_s = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.stations[2].arrival_rate_per_min = 1000.0;
        assert!(cfg.validate().is_err());
        let mut cfg = small();
        cfg.randomized_prob = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn trips_pass_replay_check() {
        let run = simulate(&small()).unwrap();
        for trip in &run.trips {
            let report = replay_check(trip);
            assert!(report.passed(), "{:?}", report.failures);
            assert_eq!(aggregate_occupancy(&trip.count_form), trip.occupancy);
        }
    }

    #[test]
    fn deleted_frame_breaks_coverage() {
        let run = simulate(&small()).unwrap();
        let mut trip = run.trips[0].clone();
        trip.capture.records.remove(5);
        let report = replay_check(&trip);
        assert!(report.failures.iter().any(|f| f.contains("label coverage")));
    }

    #[test]
    fn tampered_load_breaks_telescoping() {
        let run = simulate(&small()).unwrap();
        let mut trip = run.trips[0].clone();
        trip.count_form.rows[4].load += 1;
        assert!(!replay_check(&trip).passed());
    }

    #[test]
    fn empty_world_gives_empty_capture() {
        let mut cfg = small();
        cfg.initial_load_mean = 0.0;
        cfg.noise_rate_per_min = 0.0;
        cfg.platform_mean = 0.0;
        cfg.infrastructure_rate_per_min = 0.0;
        cfg.multicast_rate_per_min = 0.0;
        for s in &mut cfg.stations {
            s.arrival_rate_per_min = 0.0;
        }
        let run = simulate(&cfg).unwrap();
        for trip in &run.trips {
            assert!(trip.capture.is_empty());
            assert_eq!(trip.count_form.header.on_board_initial, 0);
            assert!(trip.count_form.rows.iter().all(|r| r.on == 0 && r.off == 0 && r.load == 0));
        }
    }

    #[test]
    fn three_minute_ride_frame_count() {
        let cfg = SimConfig::default();
        let mut total = 0;
        for s in 0..20 {
            let frames = simulate_device(&cfg, 0, 180_000_000, true, true, s);
            total += frames.len();
            let mut by_burst: BTreeMap<u64, BTreeSet<MacAddress>> = BTreeMap::new();
            for (r, b) in &frames {
                by_burst.entry(*b).or_default().insert(r.source);
            }
            assert!(by_burst.values().all(|m| m.len() == 1));
        }
        // 180 s at one frame per 3 s on average.
        let mean = total as f64 / 20.0;
        assert!((50.0..=70.0).contains(&mean), "mean {mean}");
    }

    #[test]
    fn same_seed_same_output() {
        let a = simulate(&small()).unwrap();
        let b = simulate(&small()).unwrap();
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 43;
        assert_ne!(simulate(&other).unwrap(), a);
    }

    #[test]
    fn planted_target_counts_addresses() {
        let run = simulate(&small().planted()).unwrap();
        for trip in &run.trips {
            assert!(trip.labels.iter().all(|l| l.origin == FrameOrigin::Onboard));
            assert!(trip.capture.records.iter().all(|r| r.rssi_dbm >= -60));
            let m = trip.target.entries[3].minute;
            let macs: BTreeSet<_> = trip
                .capture
                .records
                .iter()
                .filter(|r| r.minute() == m)
                .map(|r| r.source)
                .collect();
            assert_eq!(trip.target.get(m), Some(Occupancy::from_integer(3 * macs.len() as i64)));
        }
    }
}
