use crate::error::{Error, Result};
use crate::Scalar;

use super::{
    dedup, density_labels, grid_neighbors, sq_dist, validate_points, validate_radius, ClusterParams,
    Clustering, ClusteringMethod,
};

/// Record ids default to input positions.
pub fn dbscan<T: Scalar>(points: &[Vec<T>], eps: T, min_pts: usize) -> Result<Clustering> {
    let ids: Vec<usize> = (0..points.len()).collect();
    dbscan_with_ids(points, &ids, eps, min_pts)
}

/// `ids` only break border ties; they are expected to be distinct.
pub fn dbscan_with_ids<T: Scalar>(
    points: &[Vec<T>],
    ids: &[usize],
    eps: T,
    min_pts: usize,
) -> Result<Clustering> {
    validate_radius("eps", eps.to_f64_lossy(), min_pts)?;
    validate_points(points, ids)?;
    let d = dedup(points, ids);
    let neighbors = grid_neighbors(&d.points, eps);
    Ok(Clustering {
        labels: density_labels(&d, &neighbors, min_pts),
        method: ClusteringMethod::Dbscan,
        params: ClusterParams::new(eps.to_f64_lossy(), min_pts),
    })
}

/// DBSCAN over `(rssi, data_rate)` pairs. Neighbours are found in one pass
/// over the points sorted by RSSI, scanning only the RSSI window of width
/// `eps` around each point.
pub fn dbscan_l<T: Scalar>(points: &[Vec<T>], eps: T, min_pts: usize) -> Result<Clustering> {
    let ids: Vec<usize> = (0..points.len()).collect();
    dbscan_l_with_ids(points, &ids, eps, min_pts)
}

pub fn dbscan_l_with_ids<T: Scalar>(
    points: &[Vec<T>],
    ids: &[usize],
    eps: T,
    min_pts: usize,
) -> Result<Clustering> {
    validate_radius("eps", eps.to_f64_lossy(), min_pts)?;
    let dim = validate_points(points, ids)?;
    if !points.is_empty() && dim != 2 {
        return Err(Error::Shape(format!(
            "dbscan_l takes (rssi, data_rate) points, got {dim} coordinates"
        )));
    }
    let d = dedup(points, ids);
    let m = d.points.len();
    let mut by_rssi: Vec<usize> = (0..m).collect();
    by_rssi.sort_by(|&a, &b| d.points[a][0].partial_cmp(&d.points[b][0]).unwrap());

    // A slightly wide window keeps boundary pairs that the exact distance
    // test below accepts.
    let window = eps + eps * T::lit(1e-6);
    let eps2 = eps * eps;
    let mut neighbors = vec![Vec::new(); m];
    let mut lo = 0;
    for pos in 0..m {
        let u = by_rssi[pos];
        let r = d.points[u][0];
        while d.points[by_rssi[lo]][0] < r - window {
            lo += 1;
        }
        let mut hi = lo;
        while hi < m && d.points[by_rssi[hi]][0] <= r + window {
            let v = by_rssi[hi];
            if sq_dist(&d.points[u], &d.points[v]) <= eps2 {
                neighbors[u].push(v);
            }
            hi += 1;
        }
        neighbors[u].sort_unstable();
    }
    Ok(Clustering {
        labels: density_labels(&d, &neighbors, min_pts),
        method: ClusteringMethod::DbscanL,
        params: ClusterParams::new(eps.to_f64_lossy(), min_pts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derandomize::canonical_labels;

    fn blobs() -> Vec<Vec<f64>> {
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push(vec![0.0 + 0.01 * i as f64, 0.0]);
            pts.push(vec![100.0 + 0.01 * i as f64, 50.0]);
        }
        pts
    }

    #[test]
    fn two_separated_blobs() {
        let c = dbscan(&blobs(), 0.5, 3).unwrap();
        assert_eq!(c.n_clusters(), 2);
        assert_eq!(c.noise_count(), 0);
        assert_eq!(c.labels[0], Some(0));
        assert_eq!(c.labels[1], Some(1));
    }

    #[test]
    fn single_point_is_noise() {
        let c = dbscan(&[vec![1.0, 2.0]], 1.0, 2).unwrap();
        assert_eq!(c.labels, vec![None]);
        let c = dbscan(&[vec![1.0, 2.0]], 1.0, 1).unwrap();
        assert_eq!(c.labels, vec![Some(0)]);
    }

    #[test]
    fn coincident_points_form_one_cluster() {
        let pts = vec![vec![3.0f32, -1.0]; 7];
        let c = dbscan(&pts, 0.1, 7).unwrap();
        assert_eq!(c.labels, vec![Some(0); 7]);
        let c = dbscan(&pts, 0.1, 8).unwrap();
        assert_eq!(c.labels, vec![None; 7]);
    }

    #[test]
    fn empty_input_and_bad_params() {
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(dbscan(&empty, 1.0, 2).unwrap().is_empty());
        assert!(dbscan_l(&empty, 1.0, 2).unwrap().is_empty());
        assert!(dbscan(&blobs(), 0.0, 2).is_err());
        assert!(dbscan(&blobs(), 1.0, 0).is_err());
        assert!(dbscan(&[vec![1.0], vec![1.0, 2.0]], 1.0, 1).is_err());
    }

    #[test]
    fn radius_is_inclusive() {
        let pts = vec![vec![0.0], vec![1.0]];
        assert_eq!(dbscan(&pts, 1.0, 2).unwrap().n_clusters(), 1);
        assert_eq!(dbscan_l(&[vec![0.0, 0.0], vec![1.0, 0.0]], 1.0, 2).unwrap().n_clusters(), 1);
    }

    #[test]
    fn border_goes_to_lowest_id_core_neighbour() {
        // Points 0..3 and 4..7 are two dense groups; point 8 sits between
        // them, within eps of one core point from each.
        let mut pts = Vec::new();
        for i in 0..4 {
            pts.push(vec![0.125 * i as f64]);
        }
        for i in 0..4 {
            pts.push(vec![2.0 + 0.125 * i as f64]);
        }
        pts.push(vec![1.1875]);
        let c = dbscan(&pts, 0.8125, 4).unwrap();
        assert_eq!(c.n_clusters(), 2);
        assert_eq!(c.labels[8], c.labels[3]);

        let ids = [8, 9, 10, 11, 0, 1, 2, 3, 12];
        let c = dbscan_with_ids(&pts, &ids, 0.8125, 4).unwrap();
        assert_eq!(c.labels[8], c.labels[4]);
    }

    #[test]
    fn duplicates_collapse_in_dbscan_l() {
        let pts = vec![vec![-50.0, 1.0]; 5];
        assert_eq!(dbscan_l(&pts, 0.5, 2).unwrap().labels, vec![Some(0); 5]);
    }

    #[test]
    fn dbscan_l_matches_dbscan_on_projection() {
        let mut pts = Vec::new();
        for i in 0..30 {
            let k = (i % 3) as f64;
            pts.push(vec![-55.0 + 7.0 * k + 0.05 * i as f64, 1.0 + 5.0 * k]);
        }
        pts.push(vec![-20.0, 54.0]);
        let full = dbscan(&pts, 1.0, 3).unwrap();
        let sweep = dbscan_l(&pts, 1.0, 3).unwrap();
        assert_eq!(canonical_labels(&full.labels), sweep.labels);
        assert_eq!(sweep.n_clusters(), 3);
        assert_eq!(sweep.labels[30], None);
    }

    #[test]
    fn dbscan_l_rejects_other_dimensions() {
        assert!(dbscan_l(&[vec![1.0, 2.0, 3.0]], 1.0, 1).is_err());
    }
}
