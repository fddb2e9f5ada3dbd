//! Fuzzy c-means and Gaussian-kernel fuzzy c-means for separating
//! passenger devices from everything else.
//!
//! Both variants alternate a membership update and a centre update. The
//! kernel variant measures distance in the kernel-induced feature space,
//! `d^2(x, v) = 2 (1 - k(x, v))`, and moves each centre to the
//! `u^m k(x, v)`-weighted mean of the points, which never increases the
//! objective for the Gaussian kernel.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::capture::Capture;
use crate::derandomize::standardize_columns;
use crate::error::{Error, Result};
use crate::seed;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    None,
    /// `sigma: None` picks the median pairwise distance of the data.
    Gaussian { sigma: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FuzzyConfig {
    pub c: usize,
    pub m: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub kernel: Kernel,
    pub seed: u64,
}

impl Default for FuzzyConfig {
    fn default() -> Self {
        FuzzyConfig {
            c: 2,
            m: 2.0,
            max_iter: 300,
            tol: 1e-6,
            kernel: Kernel::None,
            seed: 0,
        }
    }
}

impl FuzzyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c < 2 {
            return Err(Error::InvalidArgument(format!("c must be >= 2, got {}", self.c)));
        }
        if !(self.m.is_finite() && self.m > 1.0) {
            return Err(Error::InvalidArgument(format!("fuzzifier m must be > 1, got {}", self.m)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be > 0, got {}", self.tol)));
        }
        if let Kernel::Gaussian { sigma: Some(s) } = self.kernel {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidArgument(format!("sigma must be > 0, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyResult<T> {
    /// `n x c`, rows sum to one.
    pub memberships: Vec<Vec<T>>,
    pub centers: Vec<Vec<T>>,
    /// Objective after each membership update.
    pub objective_trace: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Bandwidth actually used by the kernel variant.
    pub sigma: Option<T>,
    pub passenger_cluster: usize,
    /// Set when the passenger cluster was chosen by the tie rule.
    pub passenger_tie: bool,
}

fn check_points<T: Scalar>(points: &[Vec<T>], c: usize) -> Result<usize> {
    if points.len() < c {
        return Err(Error::InvalidArgument(format!(
            "need at least {c} points for {c} clusters, got {}",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape("points have different dimensions".into()));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite coordinate".into()));
    }
    Ok(dim)
}

fn seeded_centers<T: Scalar>(points: &[Vec<T>], c: usize, seed_value: u64) -> Vec<Vec<T>> {
    let mut rng = seed::rng(seed_value, "fuzzy-centers");
    let mut idx = sample(&mut rng, points.len(), c).into_vec();
    idx.sort_unstable();
    idx.iter().map(|&i| points[i].clone()).collect()
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Median Euclidean distance over all pairs, or over a seeded sample of
/// 1000 points for larger inputs.
pub fn median_pairwise_distance<T: Scalar>(points: &[Vec<T>], seed_value: u64) -> T {
    let chosen: Vec<&Vec<T>> = if points.len() > 1000 {
        let mut rng = seed::rng(seed_value, "sigma-sample");
        let mut idx = sample(&mut rng, points.len(), 1000).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &points[i]).collect()
    } else {
        points.iter().collect()
    };
    let mut d: Vec<T> = Vec::new();
    for i in 0..chosen.len() {
        for j in i + 1..chosen.len() {
            d.push(sq_dist(chosen[i], chosen[j]).sqrt());
        }
    }
    if d.is_empty() {
        return T::zero();
    }
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = d.len() / 2;
    if d.len() % 2 == 1 {
        d[k]
    } else {
        (d[k - 1] + d[k]) / T::lit(2.0)
    }
}

enum Metric<T> {
    Euclidean,
    Gaussian { inv_two_sigma2: T },
}

impl<T: Scalar> Metric<T> {
    /// Squared distance and the kernel value (1 for Euclidean).
    fn eval(&self, x: &[T], v: &[T]) -> (T, T) {
        let r = sq_dist(x, v);
        match self {
            Metric::Euclidean => (r, T::one()),
            Metric::Gaussian { inv_two_sigma2 } => {
                let a = -r * *inv_two_sigma2;
                // 1 - exp(a) without cancellation for small distances.
                let one_minus_k = -a.exp_m1();
                (T::lit(2.0) * one_minus_k, a.exp())
            }
        }
    }
}

/// Membership row from squared distances. Zero distances take all the
/// membership, shared equally.
fn membership_row<T: Scalar>(d2: &[T], exponent: T, out: &mut [T]) {
    let zeros = d2.iter().filter(|&&d| d == T::zero()).count();
    if zeros > 0 {
        let share = T::one() / T::from_usize_lossy(zeros);
        for (u, &d) in out.iter_mut().zip(d2) {
            *u = if d == T::zero() { share } else { T::zero() };
        }
        return;
    }
    for k in 0..d2.len() {
        let s: T = d2.iter().map(|&dj| (d2[k] / dj).powf(exponent)).sum();
        out[k] = T::one() / s;
    }
}

fn run<T: Scalar>(
    points: &[Vec<T>],
    config: &FuzzyConfig,
    mut centers: Vec<Vec<T>>,
    metric: Metric<T>,
    sigma: Option<T>,
) -> FuzzyResult<T> {
    let n = points.len();
    let c = config.c;
    let m = T::lit(config.m);
    let exponent = T::one() / (m - T::one());
    let tol = T::lit(config.tol);
    let mut u = vec![vec![T::zero(); c]; n];
    let mut d2 = vec![vec![T::zero(); c]; n];
    let mut kv = vec![vec![T::one(); c]; n];
    let mut trace: Vec<T> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut row = vec![T::zero(); c];

    while iterations < config.max_iter {
        iterations += 1;
        let mut delta = T::zero();
        let mut objective = T::zero();
        for i in 0..n {
            for k in 0..c {
                let (d, kval) = metric.eval(&points[i], &centers[k]);
                d2[i][k] = d;
                kv[i][k] = kval;
            }
            membership_row(&d2[i], exponent, &mut row);
            for k in 0..c {
                delta = delta.max((row[k] - u[i][k]).abs());
                u[i][k] = row[k];
                objective += row[k].powf(m) * d2[i][k];
            }
        }
        // An increase can only come from rounding once the iteration has
        // settled; stop there.
        if trace.last().is_some_and(|&prev| objective > prev) {
            converged = true;
            break;
        }
        trace.push(objective);
        if iterations > 1 && delta < tol {
            converged = true;
            break;
        }
        for k in 0..c {
            let mut num = vec![T::zero(); points[0].len()];
            let mut den = T::zero();
            for i in 0..n {
                let w = u[i][k].powf(m) * kv[i][k];
                den += w;
                for (acc, &x) in num.iter_mut().zip(&points[i]) {
                    *acc += w * x;
                }
            }
            if den > T::zero() {
                centers[k] = num.into_iter().map(|s| s / den).collect();
            }
        }
    }
    FuzzyResult {
        memberships: u,
        centers,
        objective_trace: trace,
        iterations,
        converged,
        sigma,
        passenger_cluster: 0,
        passenger_tie: false,
    }
}

pub fn fcm<T: Scalar>(points: &[Vec<T>], config: &FuzzyConfig) -> Result<FuzzyResult<T>> {
    config.validate()?;
    check_points(points, config.c)?;
    let centers = seeded_centers(points, config.c, config.seed);
    Ok(run(points, config, centers, Metric::Euclidean, None))
}

/// FCM from explicit starting centres.
pub fn fcm_with_centers<T: Scalar>(
    points: &[Vec<T>],
    config: &FuzzyConfig,
    centers: Vec<Vec<T>>,
) -> Result<FuzzyResult<T>> {
    config.validate()?;
    let dim = check_points(points, config.c)?;
    if centers.len() != config.c || centers.iter().any(|v| v.len() != dim) {
        return Err(Error::Shape("initial centers do not match c and dimension".into()));
    }
    Ok(run(points, config, centers, Metric::Euclidean, None))
}

pub fn kernel_fcm<T: Scalar>(points: &[Vec<T>], config: &FuzzyConfig) -> Result<FuzzyResult<T>> {
    config.validate()?;
    check_points(points, config.c)?;
    let sigma = match config.kernel {
        Kernel::Gaussian { sigma: Some(s) } => T::lit(s),
        _ => median_pairwise_distance(points, config.seed),
    };
    // Identical points give a zero median; any bandwidth works there.
    let sigma = if sigma > T::zero() { sigma } else { T::one() };
    let inv_two_sigma2 = T::one() / (T::lit(2.0) * sigma * sigma);
    let centers = seeded_centers(points, config.c, config.seed);
    Ok(run(
        points,
        config,
        centers,
        Metric::Gaussian { inv_two_sigma2 },
        Some(sigma),
    ))
}

/// Cluster whose centre has the higher value in coordinate `rssi_index`.
/// Returns `(index, tie)`; a tie picks cluster 0.
pub fn select_passenger_cluster<T: Scalar>(result: &FuzzyResult<T>, rssi_index: usize) -> (usize, bool) {
    let values: Vec<T> = result.centers.iter().map(|c| c[rssi_index]).collect();
    let best = values
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let at_best: Vec<usize> = (0..values.len()).filter(|&k| values[k] == best).collect();
    (at_best[0], at_best.len() > 1)
}

/// Passenger when the membership in the passenger cluster is at least
/// `threshold`.
pub fn hard_assign<T: Scalar>(result: &FuzzyResult<T>, threshold: f64) -> Result<Vec<bool>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let t = T::lit(threshold);
    Ok(result
        .memberships
        .iter()
        .map(|row| row[result.passenger_cluster] >= t)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifyMode {
    None,
    Fcm,
    KernelFcm,
}

impl FromStr for ClassifyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ClassifyMode::None),
            "fcm" => Ok(ClassifyMode::Fcm),
            "kernel-fcm" | "kernel_fcm" => Ok(ClassifyMode::KernelFcm),
            _ => Err(Error::Unknown {
                kind: "fuzzy mode",
                name: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for ClassifyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClassifyMode::None => "none",
            ClassifyMode::Fcm => "fcm",
            ClassifyMode::KernelFcm => "kernel_fcm",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyReport {
    pub mode: ClassifyMode,
    pub records: usize,
    pub passengers: usize,
    pub tie: bool,
    pub iterations: usize,
}

/// Records not flagged as non-passengers.
pub fn passengers_only(capture: &Capture) -> Capture {
    capture.with_records(
        capture
            .records
            .iter()
            .filter(|r| r.passenger != Some(false))
            .cloned()
            .collect(),
    )
}

/// Per-record points: standardized (rssi, data_rate, captured_length).
pub fn classification_points(capture: &Capture) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = capture
        .records
        .iter()
        .map(|r| vec![f64::from(r.rssi_dbm), r.data_rate_mbps, f64::from(r.captured_length)])
        .collect();
    standardize_columns(&mut pts);
    pts
}

/// Sets `passenger` on every record. Mode `None` marks everything as a
/// passenger.
pub fn classify_capture(
    capture: &Capture,
    mode: ClassifyMode,
    config: &FuzzyConfig,
    threshold: f64,
) -> Result<(Capture, ClassifyReport)> {
    let mut out = capture.clone();
    let (flags, tie, iterations) = match mode {
        ClassifyMode::None => (vec![true; capture.len()], false, 0),
        ClassifyMode::Fcm | ClassifyMode::KernelFcm => {
            let pts = classification_points(capture);
            let mut result = if mode == ClassifyMode::Fcm {
                fcm(&pts, config)?
            } else {
                let cfg = FuzzyConfig {
                    kernel: match config.kernel {
                        Kernel::None => Kernel::Gaussian { sigma: None },
                        k => k,
                    },
                    ..*config
                };
                kernel_fcm(&pts, &cfg)?
            };
            let (k, tie) = select_passenger_cluster(&result, 0);
            result.passenger_cluster = k;
            result.passenger_tie = tie;
            (hard_assign(&result, threshold)?, tie, result.iterations)
        }
    };
    for (r, f) in out.records.iter_mut().zip(&flags) {
        r.passenger = Some(*f);
    }
    let report = ClassifyReport {
        mode,
        records: capture.len(),
        passengers: flags.iter().filter(|&&f| f).count(),
        tie,
        iterations,
    };
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![10.0, 10.0], vec![10.0, 10.1]]
    }

    fn hard(r: &FuzzyResult<f64>) -> Vec<usize> {
        r.memberships
            .iter()
            .map(|row| if row[0] >= row[1] { 0 } else { 1 })
            .collect()
    }

    #[test]
    fn separated_pairs_are_nearly_crisp() {
        let r = fcm(&pairs(), &FuzzyConfig::default()).unwrap();
        for row in &r.memberships {
            assert!(row.iter().any(|&u| u > 0.99), "{row:?}");
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let h = hard(&r);
        assert_eq!(h[0], h[1]);
        assert_eq!(h[2], h[3]);
        assert_ne!(h[0], h[2]);
    }

    #[test]
    fn two_point_closed_form() {
        // Two points and centres placed on them: memberships are exactly
        // one-hot, centres stay, objective is zero.
        let pts = vec![vec![0.0], vec![4.0]];
        let r = fcm_with_centers(&pts, &FuzzyConfig::default(), pts.clone()).unwrap();
        assert_eq!(r.memberships, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(r.objective_trace[0], 0.0);

        // With centres at 1 and 3, the point at 0 has distances 1 and 3, so
        // u = 1 / (1 + (1/9)^(1/(m-1))) = 0.9 for m = 2.
        let r = fcm_with_centers(
            &pts,
            &FuzzyConfig {
                max_iter: 1,
                ..FuzzyConfig::default()
            },
            vec![vec![1.0], vec![3.0]],
        )
        .unwrap();
        assert!((r.memberships[0][0] - 0.9f64).abs() < 1e-15);
    }

    #[test]
    fn identical_points_give_uniform_memberships() {
        let pts = vec![vec![2.0, 2.0]; 6];
        for r in [
            fcm(&pts, &FuzzyConfig::default()).unwrap(),
            kernel_fcm(&pts, &FuzzyConfig::default()).unwrap(),
        ] {
            assert_eq!(r.centers[0], r.centers[1]);
            for row in &r.memberships {
                assert_eq!(row, &vec![0.5, 0.5]);
            }
        }
    }

    #[test]
    fn too_few_points() {
        assert!(fcm(&[vec![1.0]], &FuzzyConfig::default()).is_err());
        let bad = FuzzyConfig {
            m: 1.0,
            ..FuzzyConfig::default()
        };
        assert!(fcm(&pairs(), &bad).is_err());
    }

    #[test]
    fn kernel_with_wide_bandwidth_matches_fcm() {
        let cfg = FuzzyConfig {
            kernel: Kernel::Gaussian { sigma: Some(1e3) },
            ..FuzzyConfig::default()
        };
        let a = fcm(&pairs(), &cfg).unwrap();
        let b = kernel_fcm(&pairs(), &cfg).unwrap();
        assert_eq!(hard(&a), hard(&b));
    }

    #[test]
    fn kernel_objective_is_monotone() {
        let mut pts = Vec::new();
        for i in 0..30 {
            let t = i as f64;
            pts.push(vec![0.01 * (t * 1.3).sin(), 0.01 * (t * 0.7).cos()]);
            pts.push(vec![5.0 + 2.0 * (t * 0.9).sin(), 2.0 * (t * 1.1).cos()]);
        }
        let r = kernel_fcm(&pts, &FuzzyConfig::default()).unwrap();
        assert!(r.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.sigma.unwrap() > 0.0);
    }

    #[test]
    fn passenger_selection_and_threshold() {
        let mut r = FuzzyResult {
            memberships: vec![vec![0.7, 0.3], vec![0.5, 0.5], vec![0.2, 0.8]],
            centers: vec![vec![-45.0], vec![-58.0]],
            objective_trace: vec![],
            iterations: 0,
            converged: true,
            sigma: None,
            passenger_cluster: 0,
            passenger_tie: false,
        };
        assert_eq!(select_passenger_cluster(&r, 0), (0, false));
        assert_eq!(hard_assign(&r, 0.5).unwrap(), vec![true, true, false]);
        assert_eq!(hard_assign(&r, 1.0).unwrap(), vec![false, false, false]);
        assert!(hard_assign(&r, 0.0).is_err());
        r.centers = vec![vec![-50.0], vec![-50.0]];
        assert_eq!(select_passenger_cluster(&r, 0), (0, true));
        r.centers = vec![vec![-58.0], vec![-45.0]];
        assert_eq!(select_passenger_cluster(&r, 0), (1, false));
    }

    #[test]
    fn permuting_points_permutes_rows() {
        let pts = pairs();
        let perm = [2, 0, 3, 1];
        let permuted: Vec<_> = perm.iter().map(|&i| pts[i].clone()).collect();
        let init = vec![vec![1.0, 1.0], vec![9.0, 9.0]];
        let cfg = FuzzyConfig::default();
        let a = fcm_with_centers(&pts, &cfg, init.clone()).unwrap();
        let b = fcm_with_centers(&permuted, &cfg, init).unwrap();
        for (pos, &i) in perm.iter().enumerate() {
            for k in 0..2 {
                assert!((a.memberships[i][k] - b.memberships[pos][k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mode_names() {
        assert_eq!("kernel-fcm".parse::<ClassifyMode>().unwrap(), ClassifyMode::KernelFcm);
        assert!("pca".parse::<ClassifyMode>().is_err());
    }
}
