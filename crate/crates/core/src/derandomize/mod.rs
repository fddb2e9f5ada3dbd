//! Density clustering of randomized-address probe requests and assignment of
//! representative addresses.
//!
//! All three clustering methods share one set of semantics: a point is core
//! when the total number of points within `eps` (inclusive, itself counted)
//! reaches `min_pts`; clusters are the connected components of core points;
//! a non-core point joins the cluster of its core neighbour with the lowest
//! record id, or is noise when it has none. Cluster ids are numbered by first
//! appearance in input order, so the output is fully deterministic.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capture::{Capture, ProbeRecord};
use crate::error::{Error, Result};
use crate::mac::{MacAddress, RepresentativeMacs};
use crate::Scalar;

pub mod assign;
pub mod dbscan;
pub mod optics;

pub use assign::{assign_representatives, device_count, Assignment, AssignmentPolicy, PolicyMode};
pub use dbscan::{dbscan, dbscan_l, dbscan_with_ids};
pub use optics::{optics, optics_ordering, Reachability};

/// Cluster id, or `None` for noise.
pub type Label = Option<usize>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusteringMethod {
    Dbscan,
    DbscanL,
    Optics,
}

impl FromStr for ClusteringMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dbscan" => Ok(ClusteringMethod::Dbscan),
            "dbscan_l" | "dbscan-l" => Ok(ClusteringMethod::DbscanL),
            "optics" => Ok(ClusteringMethod::Optics),
            _ => Err(Error::Unknown {
                kind: "clustering method",
                name: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for ClusteringMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClusteringMethod::Dbscan => "dbscan",
            ClusteringMethod::DbscanL => "dbscan_l",
            ClusteringMethod::Optics => "optics",
        })
    }
}

/// `eps` is the neighbourhood radius for the DBSCAN methods and the
/// extraction radius for OPTICS; `max_eps` (OPTICS only) defaults to `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub eps: f64,
    pub min_pts: usize,
    #[serde(default)]
    pub max_eps: Option<f64>,
}

impl ClusterParams {
    pub fn new(eps: f64, min_pts: usize) -> Self {
        ClusterParams {
            eps,
            min_pts,
            max_eps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub labels: Vec<Label>,
    pub method: ClusteringMethod,
    pub params: ClusterParams,
}

impl Clustering {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |m| m + 1)
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == Some(cluster))
            .collect()
    }
}

/// Renumbers cluster ids by first appearance.
pub fn canonical_labels(labels: &[Label]) -> Vec<Label> {
    let mut map = HashMap::new();
    labels
        .iter()
        .map(|l| {
            l.map(|c| {
                let next = map.len();
                *map.entry(c).or_insert(next)
            })
        })
        .collect()
}

pub(crate) fn validate_points<T: Scalar>(points: &[Vec<T>], ids: &[usize]) -> Result<usize> {
    if ids.len() != points.len() {
        return Err(Error::LengthMismatch {
            left: points.len(),
            right: ids.len(),
        });
    }
    let dim = points.first().map_or(0, Vec::len);
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::Shape(format!(
                "point {i} has {} coordinates, expected {dim}",
                p.len()
            )));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("point {i} has a non-finite coordinate")));
        }
    }
    Ok(dim)
}

pub(crate) fn validate_radius(name: &str, eps: f64, min_pts: usize) -> Result<()> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidArgument(format!("{name} must be finite and > 0, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::InvalidArgument("min_pts must be >= 1".into()));
    }
    Ok(())
}

pub(crate) fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Coincident points collapsed into weighted unique points. Unique points
/// are ordered by the smallest record id they contain.
pub(crate) struct Dedup<T> {
    pub points: Vec<Vec<T>>,
    pub weight: Vec<usize>,
    pub min_id: Vec<usize>,
    pub group_of: Vec<usize>,
}

pub(crate) fn dedup<T: Scalar>(points: &[Vec<T>], ids: &[usize]) -> Dedup<T> {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut first: Vec<usize> = Vec::new();
    let mut weight: Vec<usize> = Vec::new();
    let mut min_id: Vec<usize> = Vec::new();
    let mut raw_group = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        // Adding zero folds -0.0 into 0.0.
        let key: Vec<u64> = p.iter().map(|&x| (x + T::zero()).to_f64_lossy().to_bits()).collect();
        let g = *index.entry(key).or_insert_with(|| {
            first.push(i);
            weight.push(0);
            min_id.push(usize::MAX);
            first.len() - 1
        });
        weight[g] += 1;
        min_id[g] = min_id[g].min(ids[i]);
        raw_group.push(g);
    }
    let mut order: Vec<usize> = (0..first.len()).collect();
    order.sort_by_key(|&g| (min_id[g], first[g]));
    let mut rank = vec![0; order.len()];
    for (r, &g) in order.iter().enumerate() {
        rank[g] = r;
    }
    Dedup {
        points: order.iter().map(|&g| points[first[g]].clone()).collect(),
        weight: order.iter().map(|&g| weight[g]).collect(),
        min_id: order.iter().map(|&g| min_id[g]).collect(),
        group_of: raw_group.iter().map(|&g| rank[g]).collect(),
    }
}

/// Uniform grid over the coordinates with cells slightly wider than the
/// query radius, so every neighbour lies in an adjacent cell.
pub(crate) struct Grid {
    cell: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
    offsets: Vec<Vec<i64>>,
}

impl Grid {
    pub fn new<T: Scalar>(points: &[Vec<T>], radius: f64) -> Self {
        let cell = radius * 1.001;
        let dim = points.first().map_or(0, Vec::len);
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        let mut offsets: Vec<Vec<i64>> = vec![Vec::new()];
        for _ in 0..dim {
            offsets = offsets
                .into_iter()
                .flat_map(|o| {
                    (-1..=1).map(move |d| {
                        let mut o = o.clone();
                        o.push(d);
                        o
                    })
                })
                .collect();
        }
        Grid {
            cell,
            cells,
            offsets,
        }
    }

    fn key<T: Scalar>(p: &[T], cell: f64) -> Vec<i64> {
        p.iter().map(|x| (x.to_f64_lossy() / cell).floor() as i64).collect()
    }

    pub fn for_each_candidate<T: Scalar>(&self, p: &[T], mut f: impl FnMut(usize)) {
        let base = Self::key(p, self.cell);
        for off in &self.offsets {
            let k: Vec<i64> = base.iter().zip(off).map(|(b, o)| b.saturating_add(*o)).collect();
            if let Some(members) = self.cells.get(&k) {
                members.iter().for_each(|&j| f(j));
            }
        }
    }
}

/// Neighbour lists (self included, ascending) within `eps` via the grid.
pub(crate) fn grid_neighbors<T: Scalar>(points: &[Vec<T>], eps: T) -> Vec<Vec<usize>> {
    let grid = Grid::new(points, eps.to_f64_lossy());
    let eps2 = eps * eps;
    points
        .par_iter()
        .map(|p| {
            let mut out = Vec::new();
            grid.for_each_candidate(p, |j| {
                if sq_dist(p, &points[j]) <= eps2 {
                    out.push(j);
                }
            });
            out.sort_unstable();
            out
        })
        .collect()
}

/// Shared tail of every method: core test, components, border rule and
/// expansion back to the original points.
pub(crate) fn density_labels<T>(d: &Dedup<T>, neighbors: &[Vec<usize>], min_pts: usize) -> Vec<Label> {
    let m = d.points.len();
    let core: Vec<bool> = (0..m)
        .map(|u| neighbors[u].iter().map(|&v| d.weight[v]).sum::<usize>() >= min_pts)
        .collect();
    let mut comp: Vec<Label> = vec![None; m];
    let mut n_comp = 0;
    let mut stack = Vec::new();
    for start in 0..m {
        if !core[start] || comp[start].is_some() {
            continue;
        }
        comp[start] = Some(n_comp);
        stack.push(start);
        while let Some(u) = stack.pop() {
            for &v in &neighbors[u] {
                if core[v] && comp[v].is_none() {
                    comp[v] = Some(n_comp);
                    stack.push(v);
                }
            }
        }
        n_comp += 1;
    }
    for u in 0..m {
        if !core[u] {
            comp[u] = neighbors[u]
                .iter()
                .filter(|&&v| core[v])
                .min_by_key(|&&v| d.min_id[v])
                .and_then(|&v| comp[v]);
        }
    }
    let labels: Vec<Label> = d.group_of.iter().map(|&g| comp[g]).collect();
    canonical_labels(&labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterFeature {
    Rssi,
    DataRate,
    CapturedLength,
    Duration,
}

impl ClusterFeature {
    pub const DEFAULT: [ClusterFeature; 4] = [
        ClusterFeature::Rssi,
        ClusterFeature::DataRate,
        ClusterFeature::CapturedLength,
        ClusterFeature::Duration,
    ];

    pub fn value(self, r: &ProbeRecord) -> f64 {
        match self {
            ClusterFeature::Rssi => f64::from(r.rssi_dbm),
            ClusterFeature::DataRate => r.data_rate_mbps,
            ClusterFeature::CapturedLength => f64::from(r.captured_length),
            ClusterFeature::Duration => f64::from(r.duration_us),
        }
    }
}

impl FromStr for ClusterFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rssi" => Ok(ClusterFeature::Rssi),
            "data_rate" => Ok(ClusterFeature::DataRate),
            "captured_length" => Ok(ClusterFeature::CapturedLength),
            "duration" => Ok(ClusterFeature::Duration),
            _ => Err(Error::Unknown {
                kind: "cluster feature",
                name: s.to_string(),
            }),
        }
    }
}

/// Column-wise z-scores; constant columns become zero.
pub fn standardize_columns<T: Scalar>(points: &mut [Vec<T>]) {
    let Some(dim) = points.first().map(Vec::len) else {
        return;
    };
    let n = T::from_usize_lossy(points.len());
    for k in 0..dim {
        let mean = points.iter().map(|p| p[k]).sum::<T>() / n;
        let var = points.iter().map(|p| (p[k] - mean) * (p[k] - mean)).sum::<T>() / n;
        let sd = var.sqrt();
        for p in points.iter_mut() {
            p[k] = if sd > T::zero() { (p[k] - mean) / sd } else { T::zero() };
        }
    }
}

/// Randomized-source records of a capture as standardized points.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterInput<T> {
    /// Index of each point's record in the capture.
    pub record_ids: Vec<usize>,
    pub points: Vec<Vec<T>>,
    pub macs: Vec<MacAddress>,
    pub timestamps: Vec<u64>,
}

impl<T: Scalar> ClusterInput<T> {
    pub fn from_capture(capture: &Capture, features: &[ClusterFeature]) -> Self {
        let mut input = ClusterInput {
            record_ids: Vec::new(),
            points: Vec::new(),
            macs: Vec::new(),
            timestamps: Vec::new(),
        };
        for (i, r) in capture.records.iter().enumerate() {
            if !r.source.is_randomized() {
                continue;
            }
            input.record_ids.push(i);
            input
                .points
                .push(features.iter().map(|f| T::lit(f.value(r))).collect());
            input.macs.push(r.source);
            input.timestamps.push(r.timestamp_us);
        }
        standardize_columns(&mut input.points);
        input
    }
}

pub fn run_clustering<T: Scalar>(
    points: &[Vec<T>],
    ids: &[usize],
    method: ClusteringMethod,
    params: &ClusterParams,
) -> Result<Clustering> {
    match method {
        ClusteringMethod::Dbscan => dbscan_with_ids(points, ids, T::lit(params.eps), params.min_pts),
        ClusteringMethod::DbscanL => {
            dbscan::dbscan_l_with_ids(points, ids, T::lit(params.eps), params.min_pts)
        }
        ClusteringMethod::Optics => optics::optics_with_ids(
            points,
            ids,
            T::lit(params.max_eps.unwrap_or(params.eps)),
            params.min_pts,
            T::lit(params.eps),
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerandomizeConfig {
    pub method: ClusteringMethod,
    pub params: ClusterParams,
    pub policy: AssignmentPolicy,
    /// Ignored by `dbscan_l`, which always uses (rssi, data_rate).
    pub features: Vec<ClusterFeature>,
}

impl DerandomizeConfig {
    pub fn new(method: ClusteringMethod, params: ClusterParams, policy: AssignmentPolicy) -> Self {
        DerandomizeConfig {
            method,
            params,
            policy,
            features: ClusterFeature::DEFAULT.to_vec(),
        }
    }

    pub fn effective_features(&self) -> Vec<ClusterFeature> {
        match self.method {
            ClusteringMethod::DbscanL => vec![ClusterFeature::Rssi, ClusterFeature::DataRate],
            _ => self.features.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerandomizeReport {
    pub randomized_records: usize,
    pub clusters: usize,
    pub noise_points: usize,
    pub representatives: usize,
}

/// Replaces the address of every randomized-source record with a
/// representative address. Other records and all other fields are kept.
pub fn derandomize_capture(
    capture: &Capture,
    config: &DerandomizeConfig,
) -> Result<(Capture, DerandomizeReport)> {
    config.policy.validate()?;
    let input = ClusterInput::<f64>::from_capture(capture, &config.effective_features());
    let ids: Vec<usize> = (0..input.points.len()).collect();
    let clustering = run_clustering(&input.points, &ids, config.method, &config.params)?;
    let mut gen = RepresentativeMacs::new();
    let assignment = assign_representatives(&clustering, &input.timestamps, &config.policy, &mut gen);
    let mut out = capture.clone();
    for (k, &rid) in input.record_ids.iter().enumerate() {
        out.records[rid].representative = Some(assignment.representatives[k]);
    }
    let report = DerandomizeReport {
        randomized_records: input.points.len(),
        clusters: clustering.n_clusters(),
        noise_points: clustering.noise_count(),
        representatives: assignment.total(),
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::capture::tests::record;

    #[test]
    fn method_names() {
        assert_eq!("dbscan_l".parse::<ClusteringMethod>().unwrap(), ClusteringMethod::DbscanL);
        assert_eq!("OPTICS".parse::<ClusteringMethod>().unwrap(), ClusteringMethod::Optics);
        assert!("kmeans".parse::<ClusteringMethod>().is_err());
        for m in [ClusteringMethod::Dbscan, ClusteringMethod::DbscanL, ClusteringMethod::Optics] {
            assert_eq!(m.to_string().parse::<ClusteringMethod>().unwrap(), m);
        }
    }

    #[test]
    fn canonical_relabel() {
        let l = canonical_labels(&[Some(4), None, Some(1), Some(4)]);
        assert_eq!(l, vec![Some(0), None, Some(1), Some(0)]);
    }

    #[test]
    fn dedup_orders_by_min_id() {
        let pts = vec![vec![1.0], vec![0.0], vec![1.0], vec![-0.0]];
        let d = dedup(&pts, &[3, 1, 0, 2]);
        assert_eq!(d.weight, vec![2, 2]);
        assert_eq!(d.min_id, vec![0, 1]);
        assert_eq!(d.group_of, vec![0, 1, 0, 1]);
    }

    fn config(policy: PolicyMode) -> DerandomizeConfig {
        DerandomizeConfig::new(
            ClusteringMethod::Dbscan,
            ClusterParams::new(0.5, 2),
            AssignmentPolicy::new(policy, 3.0).unwrap(),
        )
    }

    #[test]
    fn capture_without_randomized_records_is_unchanged() {
        let cap = Capture::new(
            "s",
            "l",
            vec![record(0, "00:03:93:00:00:01", -50), record(1, "00:03:93:00:00:02", -55)],
        )
        .unwrap();
        let (out, report) = derandomize_capture(&cap, &config(PolicyMode::Mult)).unwrap();
        assert_eq!(out, cap);
        assert_eq!(report.representatives, 0);
    }

    #[test]
    fn randomized_records_get_representatives_in_place() {
        let mut recs = vec![
            record(0, "02:00:00:00:00:01", -50),
            record(1, "00:03:93:00:00:02", -55),
            record(2, "06:00:00:00:00:03", -50),
            record(3, "0a:00:00:00:00:04", -30),
        ];
        recs[3].data_rate_mbps = 24.0;
        let cap = Capture::new("s", "l", recs).unwrap();
        let (out, report) = derandomize_capture(&cap, &config(PolicyMode::Sngl)).unwrap();
        assert_eq!(out.len(), cap.len());
        assert_eq!(out.records[1], cap.records[1]);
        let r0 = out.records[0].representative.unwrap();
        assert_eq!(Some(r0), out.records[2].representative);
        assert_ne!(Some(r0), out.records[3].representative);
        assert!(r0.is_randomized());
        assert_eq!(report.clusters, 1);
        assert_eq!(report.noise_points, 1);
        assert_eq!(report.representatives, 2);
        for (a, b) in out.records.iter().zip(&cap.records) {
            assert_eq!(a.source, b.source);
            assert_eq!(a.timestamp_us, b.timestamp_us);
        }
    }

    #[test]
    fn sngl_with_all_noise_gives_one_per_point() {
        let recs: Vec<_> = (0..5)
            .map(|i| record(i, "02:00:00:00:00:01", -40 - 5 * i as i32))
            .collect();
        let cap = Capture::new("s", "l", recs).unwrap();
        let mut cfg = config(PolicyMode::Sngl);
        cfg.params = ClusterParams::new(0.01, 2);
        let (_, report) = derandomize_capture(&cap, &cfg).unwrap();
        assert_eq!(report.noise_points, 5);
        assert_eq!(report.representatives, 5);
    }
}
