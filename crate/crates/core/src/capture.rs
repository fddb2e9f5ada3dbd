//! Normalized probe-capture records and their JSON Lines representation.
//!
//! One line per frame, fixed field names:
//!
//! ```text
//! {"timestamp_us":1680000000000000,"frame_type":0,"subtype":4,
//!  "source":"da:a1:19:00:00:01","destination":"ff:ff:ff:ff:ff:ff",
//!  "rssi_dbm":-52,"data_rate_mbps":1.0,"ssid":"","captured_length":120,
//!  "duration_us":314}
//! ```
//!
//! An omitted `ssid` means the element was missing from the frame; `null`
//! and `""` both mean it was present but empty. Later stages may add
//! `representative` (a MAC) and `passenger` (a boolean).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::mac::MacAddress;

pub const MICROS_PER_MINUTE: u64 = 60_000_000;

/// SSID element state. `Empty` is the wildcard (zero-length) SSID,
/// `Missing` means the element was absent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub enum Ssid {
    #[default]
    Missing,
    Empty,
    Named(String),
}

impl Ssid {
    pub fn is_missing(&self) -> bool {
        matches!(self, Ssid::Missing)
    }

    pub fn from_text(text: Option<&str>) -> Self {
        match text {
            None | Some("") => Ssid::Empty,
            Some(s) => Ssid::Named(s.to_string()),
        }
    }
}

impl Serialize for Ssid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            // Only reached when the caller does not skip missing values.
            Ssid::Missing => serializer.serialize_none(),
            Ssid::Empty => serializer.serialize_str(""),
            Ssid::Named(s) => serializer.serialize_str(s),
        }
    }
}

fn deserialize_present_ssid<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Ssid, D::Error> {
    let value: Option<String> = Option::deserialize(deserializer)?;
    Ok(Ssid::from_text(value.as_deref()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub timestamp_us: u64,
    pub frame_type: u8,
    pub subtype: u8,
    pub source: MacAddress,
    pub destination: MacAddress,
    pub rssi_dbm: i32,
    pub data_rate_mbps: f64,
    #[serde(
        default,
        skip_serializing_if = "Ssid::is_missing",
        deserialize_with = "deserialize_present_ssid"
    )]
    pub ssid: Ssid,
    pub captured_length: u32,
    pub duration_us: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representative: Option<MacAddress>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passenger: Option<bool>,
}

impl ProbeRecord {
    /// The address features are keyed by: the assigned representative when
    /// de-randomization ran, the transmitted source otherwise.
    pub fn effective_source(&self) -> MacAddress {
        self.representative.unwrap_or(self.source)
    }

    pub fn minute(&self) -> i64 {
        (self.timestamp_us / MICROS_PER_MINUTE) as i64
    }

    pub fn is_probe_request(&self) -> bool {
        self.frame_type == 0 && self.subtype == 4
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub session_id: String,
    pub line_id: String,
    pub records: Vec<ProbeRecord>,
}

impl Capture {
    /// Validates the session id and timestamp ordering.
    pub fn new(
        session_id: impl Into<String>,
        line_id: impl Into<String>,
        records: Vec<ProbeRecord>,
    ) -> Result<Self> {
        let session_id = session_id.into();
        if session_id.is_empty() {
            return Err(Error::InvalidArgument("session id must not be empty".into()));
        }
        if let Some(i) = records
            .windows(2)
            .position(|w| w[1].timestamp_us < w[0].timestamp_us)
        {
            return Err(Error::schema(
                i + 2,
                "records are not sorted by timestamp",
            ));
        }
        Ok(Capture {
            session_id,
            line_id: line_id.into(),
            records,
        })
    }

    /// Same session, different record set. The subset of an ordered capture
    /// stays ordered, so no re-validation happens.
    pub fn with_records(&self, records: Vec<ProbeRecord>) -> Self {
        Capture {
            session_id: self.session_id.clone(),
            line_id: self.line_id.clone(),
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn read_jsonl(
        path: &Path,
        session_id: impl Into<String>,
        line_id: impl Into<String>,
    ) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let records = read_records(BufReader::new(file))?;
        Capture::new(session_id, line_id, records)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        write_records(&mut w, &self.records).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn read_records<R: BufRead>(reader: R) -> Result<Vec<ProbeRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::schema(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ProbeRecord =
            serde_json::from_str(&line).map_err(|e| Error::schema(i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records<W: Write>(w: &mut W, records: &[ProbeRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mac::parse_mac;

    pub(crate) fn record(ts: u64, source: &str, rssi: i32) -> ProbeRecord {
        ProbeRecord {
            timestamp_us: ts,
            frame_type: 0,
            subtype: 4,
            source: parse_mac(source).unwrap(),
            destination: MacAddress::BROADCAST,
            rssi_dbm: rssi,
            data_rate_mbps: 1.0,
            ssid: Ssid::Empty,
            captured_length: 100,
            duration_us: 300,
            representative: None,
            passenger: None,
        }
    }

    #[test]
    fn ssid_tri_state_round_trip() {
        let base = r#"{"timestamp_us":5,"frame_type":0,"subtype":4,"source":"02:00:00:00:00:01","destination":"ff:ff:ff:ff:ff:ff","rssi_dbm":-50,"data_rate_mbps":1.0,"captured_length":100,"duration_us":300"#;
        let missing: ProbeRecord = serde_json::from_str(&format!("{base}}}")).unwrap();
        assert_eq!(missing.ssid, Ssid::Missing);
        let null: ProbeRecord = serde_json::from_str(&format!("{base},\"ssid\":null}}")).unwrap();
        assert_eq!(null.ssid, Ssid::Empty);
        let empty: ProbeRecord = serde_json::from_str(&format!("{base},\"ssid\":\"\"}}")).unwrap();
        assert_eq!(empty.ssid, Ssid::Empty);
        let named: ProbeRecord =
            serde_json::from_str(&format!("{base},\"ssid\":\"MiamiFree\"}}")).unwrap();
        assert_eq!(named.ssid, Ssid::Named("MiamiFree".into()));

        let text = serde_json::to_string(&missing).unwrap();
        assert!(!text.contains("ssid"));
        let text = serde_json::to_string(&empty).unwrap();
        assert!(text.contains(r#""ssid":"""#));
        for r in [missing, null, empty, named] {
            let back: ProbeRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
            assert_eq!(back, r);
        }
    }

    #[test]
    fn capture_rejects_unsorted_and_empty_session() {
        let a = record(10, "02:00:00:00:00:01", -50);
        let b = record(5, "02:00:00:00:00:02", -50);
        assert!(Capture::new("s", "l", vec![a.clone(), b.clone()]).is_err());
        assert!(Capture::new("", "l", vec![]).is_err());
        assert!(Capture::new("s", "l", vec![b, a]).is_ok());
    }

    #[test]
    fn effective_source_prefers_representative() {
        let mut r = record(0, "02:00:00:00:00:01", -50);
        assert_eq!(r.effective_source(), r.source);
        let rep = parse_mac("02:00:00:00:00:99").unwrap();
        r.representative = Some(rep);
        assert_eq!(r.effective_source(), rep);
    }

    #[test]
    fn jsonl_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let cap = Capture::new(
            "s1",
            "OMNI",
            vec![record(1, "02:00:00:00:00:01", -50), record(2, "00:03:93:00:00:01", -70)],
        )
        .unwrap();
        cap.write_jsonl(&path).unwrap();
        let back = Capture::read_jsonl(&path, "s1", "OMNI").unwrap();
        assert_eq!(back, cap);
    }
}
