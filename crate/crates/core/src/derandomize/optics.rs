use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::Scalar;

use super::{
    canonical_labels, dedup, sq_dist, validate_points, validate_radius, ClusterParams, Clustering,
    ClusteringMethod, Dedup, Grid, Label,
};

/// Cluster ordering with reachability and core distances per original
/// point. Distances are `None` when undefined within `max_eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reachability {
    pub order: Vec<usize>,
    pub reachability: Vec<Option<f64>>,
    pub core_distance: Vec<Option<f64>>,
}

struct HeapKey<T>(T, usize);

impl<T: Scalar> PartialEq for HeapKey<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for HeapKey<T> {}

impl<T: Scalar> PartialOrd for HeapKey<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for HeapKey<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .to_f64_lossy()
            .total_cmp(&other.0.to_f64_lossy())
            .then(self.1.cmp(&other.1))
    }
}

/// Squared distances throughout, so thresholds compare exactly like the
/// DBSCAN neighbour test.
struct Ordered<T> {
    d: Dedup<T>,
    neighbors: Vec<Vec<(usize, T)>>,
    core2: Vec<Option<T>>,
    order: Vec<usize>,
    reach2: Vec<Option<T>>,
}

fn run<T: Scalar>(points: &[Vec<T>], ids: &[usize], max_eps: T, min_pts: usize) -> Ordered<T> {
    let d = dedup(points, ids);
    let m = d.points.len();
    let grid = Grid::new(&d.points, max_eps.to_f64_lossy());
    let max2 = max_eps * max_eps;
    let neighbors: Vec<Vec<(usize, T)>> = d
        .points
        .par_iter()
        .map(|p| {
            let mut out = Vec::new();
            grid.for_each_candidate(p, |j| {
                let s = sq_dist(p, &d.points[j]);
                if s <= max2 {
                    out.push((j, s));
                }
            });
            out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            out
        })
        .collect();
    let core2: Vec<Option<T>> = neighbors
        .iter()
        .map(|nb| {
            let mut acc = 0;
            for &(v, s) in nb {
                acc += d.weight[v];
                if acc >= min_pts {
                    return Some(s);
                }
            }
            None
        })
        .collect();

    let mut processed = vec![false; m];
    let mut reach2: Vec<Option<T>> = vec![None; m];
    let mut order = Vec::with_capacity(m);
    let mut heap: BinaryHeap<Reverse<HeapKey<T>>> = BinaryHeap::new();
    let update = |u: usize, processed: &[bool], reach2: &mut [Option<T>], heap: &mut BinaryHeap<_>| {
        let Some(cd) = core2[u] else { return };
        for &(v, s) in &neighbors[u] {
            if processed[v] {
                continue;
            }
            let r = if s > cd { s } else { cd };
            if reach2[v].is_none_or(|old| r < old) {
                reach2[v] = Some(r);
                heap.push(Reverse(HeapKey(r, v)));
            }
        }
    };
    for start in 0..m {
        if processed[start] {
            continue;
        }
        processed[start] = true;
        order.push(start);
        update(start, &processed, &mut reach2, &mut heap);
        while let Some(Reverse(HeapKey(r, u))) = heap.pop() {
            if processed[u] || reach2[u] != Some(r) {
                continue;
            }
            processed[u] = true;
            order.push(u);
            update(u, &processed, &mut reach2, &mut heap);
        }
    }
    Ordered {
        d,
        neighbors,
        core2,
        order,
        reach2,
    }
}

fn check<T: Scalar>(max_eps: T, min_pts: usize, extraction_eps: T) -> Result<()> {
    validate_radius("max_eps", max_eps.to_f64_lossy(), min_pts)?;
    validate_radius("extraction_eps", extraction_eps.to_f64_lossy(), min_pts)?;
    if extraction_eps > max_eps {
        return Err(Error::InvalidArgument(format!(
            "extraction_eps {extraction_eps} exceeds max_eps {max_eps}"
        )));
    }
    Ok(())
}

pub fn optics_ordering<T: Scalar>(
    points: &[Vec<T>],
    max_eps: T,
    min_pts: usize,
) -> Result<Reachability> {
    check(max_eps, min_pts, max_eps)?;
    let ids: Vec<usize> = (0..points.len()).collect();
    validate_points(points, &ids)?;
    let o = run(points, &ids, max_eps, min_pts);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); o.d.points.len()];
    for (i, &g) in o.d.group_of.iter().enumerate() {
        members[g].push(i);
    }
    let n = points.len();
    let mut out = Reachability {
        order: Vec::with_capacity(n),
        reachability: vec![None; n],
        core_distance: vec![None; n],
    };
    let root = |x: Option<T>| x.map(|s| s.to_f64_lossy().sqrt());
    for &u in &o.order {
        for (k, &i) in members[u].iter().enumerate() {
            out.order.push(i);
            out.core_distance[i] = root(o.core2[u]);
            // Later copies of a coincident point are reached from the first.
            out.reachability[i] = if k == 0 { root(o.reach2[u]) } else { root(o.core2[u]) };
        }
    }
    Ok(out)
}

pub fn optics<T: Scalar>(
    points: &[Vec<T>],
    max_eps: T,
    min_pts: usize,
    extraction_eps: T,
) -> Result<Clustering> {
    let ids: Vec<usize> = (0..points.len()).collect();
    optics_with_ids(points, &ids, max_eps, min_pts, extraction_eps)
}

/// Reachability ordering followed by threshold extraction at
/// `extraction_eps`, then the shared border rule.
pub fn optics_with_ids<T: Scalar>(
    points: &[Vec<T>],
    ids: &[usize],
    max_eps: T,
    min_pts: usize,
    extraction_eps: T,
) -> Result<Clustering> {
    check(max_eps, min_pts, extraction_eps)?;
    validate_points(points, ids)?;
    let o = run(points, ids, max_eps, min_pts);
    let e2 = extraction_eps * extraction_eps;
    let m = o.d.points.len();
    let is_core = |u: usize| o.core2[u].is_some_and(|c| c <= e2);

    let mut label: Vec<Label> = vec![None; m];
    let mut current: Option<usize> = None;
    let mut next = 0;
    for &u in &o.order {
        if o.reach2[u].is_none_or(|r| r > e2) {
            if is_core(u) {
                current = Some(next);
                next += 1;
                label[u] = current;
            }
        } else {
            label[u] = current;
        }
    }
    for u in 0..m {
        if !is_core(u) {
            label[u] = o.neighbors[u]
                .iter()
                .filter(|&&(v, s)| s <= e2 && is_core(v))
                .min_by_key(|&&(v, _)| o.d.min_id[v])
                .and_then(|&(v, _)| label[v]);
        }
    }
    let labels: Vec<Label> = o.d.group_of.iter().map(|&g| label[g]).collect();
    Ok(Clustering {
        labels: canonical_labels(&labels),
        method: ClusteringMethod::Optics,
        params: ClusterParams {
            eps: extraction_eps.to_f64_lossy(),
            min_pts,
            max_eps: Some(max_eps.to_f64_lossy()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derandomize::dbscan;

    #[test]
    fn single_point_is_noise() {
        let c = optics(&[vec![0.0, 0.0]], 1.0, 2, 1.0).unwrap();
        assert_eq!(c.labels, vec![None]);
    }

    #[test]
    fn matches_dbscan_at_max_eps() {
        let mut pts = Vec::new();
        for i in 0..15 {
            pts.push(vec![0.2 * (i % 4) as f64, 0.3 * (i / 4) as f64]);
            pts.push(vec![10.0 + 0.2 * (i % 5) as f64, 0.25 * (i / 5) as f64]);
        }
        pts.push(vec![5.0, 5.0]);
        let a = optics(&pts, 0.5, 4, 0.5).unwrap();
        let b = dbscan(&pts, 0.5, 4).unwrap();
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn tight_blob_inside_sparse_ring() {
        let mut pts = Vec::new();
        for i in 0..12 {
            let a = i as f64 * std::f64::consts::TAU / 12.0;
            pts.push(vec![0.05 * a.cos(), 0.05 * a.sin()]);
        }
        for i in 0..40 {
            let a = i as f64 * std::f64::consts::TAU / 40.0;
            pts.push(vec![3.0 * a.cos(), 3.0 * a.sin()]);
        }
        let coarse = optics(&pts, 3.5, 3, 3.5).unwrap();
        assert_eq!(coarse.n_clusters(), 1);
        let fine = optics(&pts, 3.5, 3, 0.2).unwrap();
        let blob = fine.labels[0];
        assert!(blob.is_some());
        assert!(fine.labels[..12].iter().all(|&l| l == blob));
        assert!(fine.labels[12..].iter().all(|&l| l != blob));
    }

    fn brute_core_distance(pts: &[Vec<f64>], i: usize, min_pts: usize, max_eps: f64) -> Option<f64> {
        let mut d: Vec<f64> = pts.iter().map(|q| sq_dist(&pts[i], q)).collect();
        d.sort_by(f64::total_cmp);
        d.get(min_pts - 1).copied().filter(|&x| x <= max_eps * max_eps).map(f64::sqrt)
    }

    #[test]
    fn reachability_against_brute_force() {
        let pts: Vec<Vec<f64>> = (0..25)
            .map(|i| vec![((i * 7) % 11) as f64 * 0.3, ((i * 5) % 13) as f64 * 0.2])
            .collect();
        let r = optics_ordering(&pts, 1.0, 4).unwrap();
        let mut seen = r.order.clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..25).collect::<Vec<_>>());
        for i in 0..pts.len() {
            let want = brute_core_distance(&pts, i, 4, 1.0);
            match (want, r.core_distance[i]) {
                (None, None) => {}
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                other => panic!("point {i}: {other:?}"),
            }
        }
        // Every reachability value is the smallest max(core(q), d(q, p))
        // over points q earlier in the ordering.
        for (pos, &p) in r.order.iter().enumerate() {
            let best = r.order[..pos]
                .iter()
                .filter_map(|&q| {
                    let cd = r.core_distance[q]?;
                    let d2 = sq_dist(&pts[q], &pts[p]);
                    (d2 <= 1.0).then_some(cd.max(d2.sqrt()))
                })
                .min_by(f64::total_cmp);
            match (best, r.reachability[p]) {
                (None, None) => {}
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                other => panic!("point {p}: {other:?}"),
            }
        }
    }

    #[test]
    fn extraction_above_max_eps_is_rejected() {
        assert!(optics(&[vec![0.0]], 1.0, 2, 2.0).is_err());
    }
}
