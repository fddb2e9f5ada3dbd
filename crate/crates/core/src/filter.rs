//! Five-step cleaning of raw captures down to probe requests that plausibly
//! come from devices inside the vehicle.
//!
//! Every step is a pure per-record predicate, so the steps commute and the
//! whole pipeline is idempotent.

use serde::{Deserialize, Serialize};

use crate::capture::{Capture, ProbeRecord};
use crate::error::{Error, Result};
use crate::oui::OuiTable;

pub const DEFAULT_RSSI_THRESHOLD: i32 = -60;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub rssi_threshold: i32,
    pub require_broadcast_destination: bool,
    pub oui_filter_enabled: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            rssi_threshold: DEFAULT_RSSI_THRESHOLD,
            require_broadcast_destination: true,
            oui_filter_enabled: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rssi_threshold > 0 {
            return Err(Error::InvalidArgument(format!(
                "rssi threshold must be <= 0 dBm, got {}",
                self.rssi_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterStep {
    ProbeRequests,
    BroadcastOnly,
    UnicastSource,
    RssiThreshold,
    SmartphoneOui,
}

impl FilterStep {
    pub const ORDER: [FilterStep; 5] = [
        FilterStep::ProbeRequests,
        FilterStep::BroadcastOnly,
        FilterStep::UnicastSource,
        FilterStep::RssiThreshold,
        FilterStep::SmartphoneOui,
    ];

    pub fn keeps(self, rec: &ProbeRecord, config: &FilterConfig, table: &OuiTable) -> bool {
        match self {
            FilterStep::ProbeRequests => rec.is_probe_request(),
            FilterStep::BroadcastOnly => {
                !config.require_broadcast_destination || rec.destination.is_broadcast()
            }
            FilterStep::UnicastSource => rec.source.is_unicast(),
            // "below the threshold" is strict: the threshold itself survives.
            FilterStep::RssiThreshold => rec.rssi_dbm >= config.rssi_threshold,
            FilterStep::SmartphoneOui => {
                !config.oui_filter_enabled
                    || rec.source.is_locally_administered()
                    || table.lookup(&rec.source).is_some()
            }
        }
    }
}

/// Record counts: raw, then after each of the five steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub counts_after_step: [usize; 6],
    pub dropped_by_step: [usize; 5],
}

fn retain(capture: &Capture, step: FilterStep, config: &FilterConfig, table: &OuiTable) -> Capture {
    capture.with_records(
        capture
            .records
            .iter()
            .filter(|r| step.keeps(r, config, table))
            .cloned()
            .collect(),
    )
}

pub fn step1_select_probe_requests(capture: &Capture) -> Capture {
    retain(capture, FilterStep::ProbeRequests, &FilterConfig::default(), &OuiTable::default())
}

pub fn step2_broadcast_only(capture: &Capture) -> Capture {
    retain(capture, FilterStep::BroadcastOnly, &FilterConfig::default(), &OuiTable::default())
}

pub fn step3_unicast_source(capture: &Capture) -> Capture {
    retain(capture, FilterStep::UnicastSource, &FilterConfig::default(), &OuiTable::default())
}

pub fn step4_rssi_threshold(capture: &Capture, config: &FilterConfig) -> Capture {
    retain(capture, FilterStep::RssiThreshold, config, &OuiTable::default())
}

pub fn step5_oui_filter(capture: &Capture, table: &OuiTable) -> Capture {
    retain(capture, FilterStep::SmartphoneOui, &FilterConfig::default(), table)
}

/// Applies `steps` in the given order and reports counts after each one.
pub fn run_steps(
    capture: &Capture,
    steps: &[FilterStep],
    config: &FilterConfig,
    table: &OuiTable,
) -> (Capture, Vec<usize>) {
    let mut counts = Vec::with_capacity(steps.len() + 1);
    counts.push(capture.len());
    let mut records: Vec<ProbeRecord> = capture.records.clone();
    for &step in steps {
        records.retain(|r| step.keeps(r, config, table));
        counts.push(records.len());
    }
    (capture.with_records(records), counts)
}

pub fn run_pipeline(
    capture: &Capture,
    config: &FilterConfig,
    table: &OuiTable,
) -> Result<(Capture, FilterReport)> {
    config.validate()?;
    let (out, counts) = run_steps(capture, &FilterStep::ORDER, config, table);
    let mut counts_after_step = [0usize; 6];
    counts_after_step.copy_from_slice(&counts);
    let mut dropped_by_step = [0usize; 5];
    for (k, d) in dropped_by_step.iter_mut().enumerate() {
        *d = counts_after_step[k] - counts_after_step[k + 1];
    }
    Ok((
        out,
        FilterReport {
            counts_after_step,
            dropped_by_step,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::tests::record;
    use crate::mac::{parse_mac, MacAddress};

    fn cap(records: Vec<ProbeRecord>) -> Capture {
        Capture::new("s", "l", records).unwrap()
    }

    #[test]
    fn step1_keeps_only_probe_requests() {
        let probe = record(0, "02:00:00:00:00:01", -50);
        let mut data = record(1, "02:00:00:00:00:01", -50);
        data.frame_type = 2;
        data.subtype = 0;
        let out = step1_select_probe_requests(&cap(vec![probe.clone(), data]));
        assert_eq!(out.records, vec![probe]);
        assert!(step1_select_probe_requests(&cap(vec![])).is_empty());
    }

    #[test]
    fn step2_counts_broadcast() {
        let mut recs = Vec::new();
        for i in 0..7u64 {
            let mut r = record(i, "02:00:00:00:00:01", -50);
            if i % 3 == 0 {
                r.destination = parse_mac("00:11:22:33:44:55").unwrap();
            }
            recs.push(r);
        }
        let k = recs.iter().filter(|r| r.destination == MacAddress::BROADCAST).count();
        assert_eq!(step2_broadcast_only(&cap(recs)).len(), k);
    }

    #[test]
    fn step3_drops_multicast_sources() {
        let uni = record(0, "02:00:00:00:00:01", -50);
        let multi = record(1, "01:00:5e:00:00:01", -50);
        let out = step3_unicast_source(&cap(vec![uni.clone(), multi]));
        assert_eq!(out.records, vec![uni.clone()]);
        let all_uni = cap(vec![uni.clone(), uni]);
        assert_eq!(step3_unicast_source(&all_uni), all_uni);
    }

    #[test]
    fn step4_boundary_is_kept() {
        let cfg = FilterConfig::default();
        let recs: Vec<_> = [-59, -61, -60]
            .iter()
            .enumerate()
            .map(|(i, &rssi)| record(i as u64, "02:00:00:00:00:01", rssi))
            .collect();
        let out = step4_rssi_threshold(&cap(recs), &cfg);
        let kept: Vec<i32> = out.records.iter().map(|r| r.rssi_dbm).collect();
        assert_eq!(kept, vec![-59, -60]);
    }

    #[test]
    fn step5_oui_rules() {
        let table = OuiTable::bundled();
        let known = record(0, "00:03:93:00:00:01", -50);
        let unknown = record(1, "00:11:22:33:44:55", -50);
        let random = record(2, "06:11:22:33:44:55", -50);
        let out = step5_oui_filter(&cap(vec![known.clone(), unknown, random.clone()]), &table);
        assert_eq!(out.records, vec![known, random]);
    }

    #[test]
    fn pipeline_on_empty_capture() {
        let (out, report) =
            run_pipeline(&cap(vec![]), &FilterConfig::default(), &OuiTable::bundled()).unwrap();
        assert!(out.is_empty());
        assert_eq!(report.counts_after_step, [0; 6]);
    }

    #[test]
    fn positive_threshold_is_rejected() {
        let cfg = FilterConfig {
            rssi_threshold: 5,
            ..FilterConfig::default()
        };
        assert!(run_pipeline(&cap(vec![]), &cfg, &OuiTable::bundled()).is_err());
    }
}
