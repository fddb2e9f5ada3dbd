use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::Scalar;

use super::forest::{Forest, ForestConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Index of the winning candidate.
    pub best: usize,
    /// Mean held-out MAE per candidate.
    pub scores: Vec<f64>,
}

/// Contiguous fold boundaries: fold `f` covers `[f n / k, (f + 1) n / k)`.
pub fn contiguous_folds(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    (0..k).map(|f| f * n / k..(f + 1) * n / k).collect()
}

/// Scores every candidate column subset by k-fold mean MAE of a forest and
/// returns the lowest; ties go to the earlier candidate. Rows are expected
/// in time order, and folds never shuffle them. Every candidate sees the
/// same per-fold seeds.
pub fn select_features_cv<T: Scalar>(
    rows: &[Vec<T>],
    targets: &[T],
    candidates: &[Vec<usize>],
    k: usize,
    config: &ForestConfig,
) -> Result<CvResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate feature subsets".into()));
    }
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if rows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: targets.len(),
        });
    }
    if rows.len() < k {
        return Err(Error::InvalidArgument(format!(
            "{} samples cannot fill {k} folds",
            rows.len()
        )));
    }
    let width = rows[0].len();
    if let Some(bad) = candidates.iter().flatten().find(|&&c| c >= width) {
        return Err(Error::InvalidArgument(format!("candidate column {bad} out of range")));
    }
    let folds = contiguous_folds(rows.len(), k);
    let mut scores = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let project = |r: &Vec<T>| -> Vec<T> { cand.iter().map(|&c| r[c]).collect() };
        let mut total = 0.0;
        for (f, fold) in folds.iter().enumerate() {
            let train_x: Vec<Vec<T>> = rows[..fold.start]
                .iter()
                .chain(&rows[fold.end..])
                .map(project)
                .collect();
            let train_y: Vec<T> = targets[..fold.start]
                .iter()
                .chain(&targets[fold.end..])
                .copied()
                .collect();
            let cfg = ForestConfig {
                seed: seed::derive_indexed(config.seed, "cv-fold", f as u64),
                ..*config
            };
            let (forest, _) = Forest::fit(&train_x, &train_y, &cfg)?;
            let err: f64 = fold
                .clone()
                .map(|i| (forest.predict(&project(&rows[i])) - targets[i]).abs().to_f64_lossy())
                .sum();
            total += err / fold.len() as f64;
        }
        scores.push(total / k as f64);
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    Ok(CvResult { best, scores })
}
