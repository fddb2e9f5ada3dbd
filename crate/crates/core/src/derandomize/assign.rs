use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::capture::MICROS_PER_MINUTE;
use crate::error::{Error, Result};
use crate::mac::{MacAddress, RepresentativeMacs};

use super::Clustering;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// A cluster may hold several devices.
    Mult,
    /// A cluster is one device.
    Sngl,
}

impl FromStr for PolicyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mult" => Ok(PolicyMode::Mult),
            "sngl" => Ok(PolicyMode::Sngl),
            _ => Err(Error::Unknown {
                kind: "assignment policy",
                name: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for PolicyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyMode::Mult => "mult",
            PolicyMode::Sngl => "sngl",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignmentPolicy {
    pub mode: PolicyMode,
    /// Probe requests per device per minute.
    pub avg: f64,
    /// Scale `avg` by the cluster's minute span before dividing.
    #[serde(default)]
    pub normalize_by_span: bool,
}

impl AssignmentPolicy {
    pub fn new(mode: PolicyMode, avg: f64) -> Result<Self> {
        let p = AssignmentPolicy {
            mode,
            avg,
            normalize_by_span: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.avg.is_finite() && self.avg > 0.0) {
            return Err(Error::InvalidArgument(format!("avg must be > 0, got {}", self.avg)));
        }
        Ok(())
    }
}

/// `round(num / avg)` (half away from zero) when `num >= avg`, else 1.
pub fn device_count(num: usize, avg: f64) -> usize {
    let n = num as f64;
    if n >= avg {
        ((n / avg).round() as usize).max(1)
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    /// Representative per clustered point, in point order.
    pub representatives: Vec<MacAddress>,
    pub per_cluster: Vec<usize>,
    pub noise: usize,
}

impl Assignment {
    pub fn total(&self) -> usize {
        self.per_cluster.iter().sum::<usize>() + self.noise
    }
}

/// Under MULT a cluster's members are taken in time order: the first
/// `device_count - 1` groups hold `max(1, floor(avg))` records each and the
/// last group takes the rest. Every group and every noise point receives a
/// fresh address. The count is capped at the cluster size, which only
/// matters when `avg < 1`.
pub fn assign_representatives(
    clustering: &Clustering,
    timestamps: &[u64],
    policy: &AssignmentPolicy,
    gen: &mut RepresentativeMacs,
) -> Assignment {
    let n = clustering.labels.len();
    assert_eq!(timestamps.len(), n, "one timestamp per clustered point");
    let k = clustering.n_clusters();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, l) in clustering.labels.iter().enumerate() {
        if let Some(c) = l {
            members[*c].push(i);
        }
    }
    let mut reps = vec![MacAddress::default(); n];
    let mut per_cluster = Vec::with_capacity(k);
    for mut m in members {
        m.sort_by_key(|&i| (timestamps[i], i));
        let avg = if policy.normalize_by_span {
            let lo = timestamps[m[0]] / MICROS_PER_MINUTE;
            let hi = timestamps[*m.last().unwrap()] / MICROS_PER_MINUTE;
            policy.avg * (hi - lo + 1) as f64
        } else {
            policy.avg
        };
        let count = match policy.mode {
            PolicyMode::Sngl => 1,
            PolicyMode::Mult => device_count(m.len(), avg).min(m.len()),
        };
        let size = (avg.floor() as usize).max(1);
        let mut pos = 0;
        for g in 0..count {
            let mac = gen.fresh();
            let end = if g + 1 == count { m.len() } else { (pos + size).min(m.len() - (count - g - 1)) };
            for &i in &m[pos..end] {
                reps[i] = mac;
            }
            pos = end;
        }
        per_cluster.push(count);
    }
    let mut noise = 0;
    for (i, l) in clustering.labels.iter().enumerate() {
        if l.is_none() {
            reps[i] = gen.fresh();
            noise += 1;
        }
    }
    Assignment {
        representatives: reps,
        per_cluster,
        noise,
    }
}
