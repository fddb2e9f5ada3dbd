use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::Scalar;

use super::{check_windows, ModelKind, Standardizer, TrainedModel, TrainingReport, MODEL_FORMAT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Fraction of features drawn as split candidates at every node.
    pub features_per_split: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 16,
            min_samples_leaf: 1,
            features_per_split: 0.5,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be >= 1".into()));
        }
        if !(self.features_per_split > 0.0 && self.features_per_split <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "features_per_split must lie in (0, 1], got {}",
                self.features_per_split
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidArgument("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

/// Regression tree as parallel node arrays. `feature[i] < 0` marks a leaf;
/// internal nodes send `x[feature] <= threshold` left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tree<T> {
    pub feature: Vec<i32>,
    pub threshold: Vec<T>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub value: Vec<T>,
}

impl<T: Scalar> Tree<T> {
    pub fn leaf(value: T) -> Self {
        Tree {
            feature: vec![-1],
            threshold: vec![T::zero()],
            left: vec![0],
            right: vec![0],
            value: vec![value],
        }
    }

    pub fn predict(&self, x: &[T]) -> T {
        let mut i = 0;
        while self.feature[i] >= 0 {
            let f = self.feature[i] as usize;
            i = if x[f] <= self.threshold[i] { self.left[i] } else { self.right[i] } as usize;
        }
        self.value[i]
    }

    pub fn node_count(&self) -> usize {
        self.feature.len()
    }

    fn push_leaf(&mut self, value: T) -> usize {
        self.feature.push(-1);
        self.threshold.push(T::zero());
        self.left.push(0);
        self.right.push(0);
        self.value.push(value);
        self.feature.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Forest<T> {
    pub n_features: usize,
    pub trees: Vec<Tree<T>>,
}

impl<T: Scalar> Forest<T> {
    /// Mean of the tree outputs, summed in tree order.
    pub fn predict(&self, x: &[T]) -> T {
        let s: T = self.trees.iter().map(|t| t.predict(x)).sum();
        s / T::from_usize_lossy(self.trees.len())
    }

    /// Grows the ensemble on a plain design matrix.
    pub fn fit(x: &[Vec<T>], y: &[T], config: &ForestConfig) -> Result<(Self, Option<T>)> {
        config.validate()?;
        if x.is_empty() {
            return Err(Error::EmptyInput);
        }
        if x.len() != y.len() {
            return Err(Error::LengthMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        let n_features = x[0].len();
        if x.iter().any(|r| r.len() != n_features) {
            return Err(Error::Shape("rows have different widths".into()));
        }
        let grown: Vec<(Tree<T>, Vec<bool>)> = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng_indexed(config.seed, "forest-tree", t as u64);
                let n = x.len();
                let idx: Vec<usize> = if config.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut in_bag = vec![false; n];
                idx.iter().for_each(|&i| in_bag[i] = true);
                (grow(x, y, idx, n_features, config, &mut rng), in_bag)
            })
            .collect();

        let mut oob_sum = vec![T::zero(); x.len()];
        let mut oob_cnt = vec![0usize; x.len()];
        for (tree, in_bag) in &grown {
            for i in 0..x.len() {
                if !in_bag[i] {
                    oob_sum[i] += tree.predict(&x[i]);
                    oob_cnt[i] += 1;
                }
            }
        }
        let scored: Vec<usize> = (0..x.len()).filter(|&i| oob_cnt[i] > 0).collect();
        let oob_mae = (config.bootstrap && !scored.is_empty()).then(|| {
            let s: T = scored
                .iter()
                .map(|&i| (oob_sum[i] / T::from_usize_lossy(oob_cnt[i]) - y[i]).abs())
                .sum();
            s / T::from_usize_lossy(scored.len())
        });
        Ok((
            Forest {
                n_features,
                trees: grown.into_iter().map(|(t, _)| t).collect(),
            },
            oob_mae,
        ))
    }
}

fn mean<T: Scalar>(y: &[T], idx: &[usize]) -> T {
    idx.iter().map(|&i| y[i]).sum::<T>() / T::from_usize_lossy(idx.len())
}

struct Split<T> {
    feature: usize,
    threshold: T,
    score: T,
}

/// Best squared-error split of `idx` on feature `f`, scored by
/// `S_L^2 / n_L + S_R^2 / n_R` (larger is better).
fn best_split_on<T: Scalar>(
    x: &[Vec<T>],
    y: &[T],
    idx: &[usize],
    f: usize,
    min_leaf: usize,
) -> Option<Split<T>> {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|&a, &b| x[a][f].partial_cmp(&x[b][f]).unwrap().then(a.cmp(&b)));
    let total: T = order.iter().map(|&i| y[i]).sum();
    let n = order.len();
    let mut left = T::zero();
    let mut best: Option<Split<T>> = None;
    for k in 1..n {
        left += y[order[k - 1]];
        let (a, b) = (x[order[k - 1]][f], x[order[k]][f]);
        if a == b || k < min_leaf || n - k < min_leaf {
            continue;
        }
        let nl = T::from_usize_lossy(k);
        let nr = T::from_usize_lossy(n - k);
        let right = total - left;
        let score = left * left / nl + right * right / nr;
        if best.as_ref().is_none_or(|s| score > s.score) {
            let mut threshold = a + (b - a) / T::lit(2.0);
            // Midpoint can round up to `b` for adjacent floats.
            if threshold >= b {
                threshold = a;
            }
            best = Some(Split {
                feature: f,
                threshold,
                score,
            });
        }
    }
    best
}

fn grow<T: Scalar>(
    x: &[Vec<T>],
    y: &[T],
    idx: Vec<usize>,
    n_features: usize,
    config: &ForestConfig,
    rng: &mut ChaCha8Rng,
) -> Tree<T> {
    let n_try = ((config.features_per_split * n_features as f64).round() as usize).clamp(1, n_features.max(1));
    let mut tree = Tree {
        feature: Vec::new(),
        threshold: Vec::new(),
        left: Vec::new(),
        right: Vec::new(),
        value: Vec::new(),
    };
    // (node slot, samples, depth)
    let root = tree.push_leaf(mean(y, &idx));
    let mut stack = vec![(root, idx, 0usize)];
    while let Some((node, idx, depth)) = stack.pop() {
        let constant = idx.iter().all(|&i| y[i] == y[idx[0]]);
        if constant || depth >= config.max_depth || idx.len() < 2 * config.min_samples_leaf || n_features == 0 {
            continue;
        }
        let total: T = idx.iter().map(|&i| y[i]).sum();
        let parent_score = total * total / T::from_usize_lossy(idx.len());
        let mut candidates = sample(rng, n_features, n_try).into_vec();
        candidates.sort_unstable();
        let mut best: Option<Split<T>> = None;
        for f in candidates {
            if let Some(s) = best_split_on(x, y, &idx, f, config.min_samples_leaf) {
                if best.as_ref().is_none_or(|b| s.score > b.score) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best.filter(|s| s.score > parent_score) else {
            continue;
        };
        let (li, ri): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| x[i][split.feature] <= split.threshold);
        let l = tree.push_leaf(mean(y, &li));
        let r = tree.push_leaf(mean(y, &ri));
        tree.feature[node] = split.feature as i32;
        tree.threshold[node] = split.threshold;
        tree.left[node] = l as u32;
        tree.right[node] = r as u32;
        stack.push((r, ri, depth + 1));
        stack.push((l, li, depth + 1));
    }
    tree
}

/// Trains on raw windows. `selected` restricts the raw columns (all when
/// `None`); each window is standardized row by row and flattened.
pub fn train_forest<T: Scalar>(
    windows: &[Vec<Vec<T>>],
    targets: &[T],
    columns: &[String],
    selected: Option<&[usize]>,
    config: &ForestConfig,
) -> Result<TrainedModel<T>> {
    let len = check_windows(windows, targets, columns.len())?;
    let selected: Vec<usize> = match selected {
        Some(s) => {
            if let Some(&bad) = s.iter().find(|&&c| c >= columns.len()) {
                return Err(Error::InvalidArgument(format!("selected column {bad} out of range")));
            }
            s.to_vec()
        }
        None => (0..columns.len()).collect(),
    };
    let rows: Vec<&[T]> = windows.iter().flatten().map(Vec::as_slice).collect();
    let standardizer = Standardizer::fit(&rows, &selected);
    let design: Vec<Vec<T>> = windows
        .iter()
        .map(|w| w.iter().flat_map(|r| standardizer.transform(r)).collect())
        .collect();
    let (forest, oob) = Forest::fit(&design, targets, config)?;
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        kind: ModelKind::Forest,
        columns: columns.to_vec(),
        lags: len - 1,
        selected_features: selected,
        standardizer,
        target_mean: T::zero(),
        target_std: T::one(),
        forest: Some(forest),
        network: None,
        training_report: TrainingReport {
            oob_mae: oob.map(Scalar::to_f64_lossy),
            samples: windows.len(),
            ..TrainingReport::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ForestConfig {
        ForestConfig {
            n_trees: 20,
            ..ForestConfig::default()
        }
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let y = vec![7.5; 30];
        let (f, _) = Forest::fit(&x, &y, &cfg()).unwrap();
        for r in &x {
            assert_eq!(f.predict(r), 7.5);
        }
        assert!(f.trees.iter().all(|t| t.node_count() == 1));
    }

    #[test]
    fn single_sample_is_a_leaf() {
        let (f, _) = Forest::fit(&[vec![1.0, 2.0]], &[4.0], &cfg()).unwrap();
        assert_eq!(f.predict(&[100.0, -3.0]), 4.0);
    }

    #[test]
    fn identical_stumps() {
        let f = Forest {
            n_features: 1,
            trees: vec![Tree::leaf(5.0f32); 4],
        };
        assert_eq!(f.predict(&[0.0]), 5.0);
    }

    #[test]
    fn learns_step_function() {
        let x: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, ((i * 37) % 11) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| if r[0] < 50.0 { 1.0 } else { 9.0 }).collect();
        let (f, oob) = Forest::fit(&x, &y, &cfg()).unwrap();
        assert!((f.predict(&[10.0, 3.0]) - 1.0).abs() < 1e-9);
        assert!((f.predict(&[90.0, 3.0]) - 9.0).abs() < 1e-9);
        assert!(oob.unwrap() < 0.5);
    }

    #[test]
    fn deterministic_and_order_free() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64, (i % 5) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] - r[1]).collect();
        let (a, _) = Forest::fit(&x, &y, &cfg()).unwrap();
        let (b, _) = Forest::fit(&x, &y, &cfg()).unwrap();
        assert_eq!(a, b);
        let mut rev = a.clone();
        rev.trees.reverse();
        for r in &x {
            assert!((a.predict(r) - rev.predict(r)).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_config_and_shapes() {
        let bad = ForestConfig {
            features_per_split: 0.0,
            ..cfg()
        };
        assert!(Forest::fit(&[vec![1.0]], &[1.0], &bad).is_err());
        assert!(Forest::<f64>::fit(&[], &[], &cfg()).is_err());
        let cols = vec!["a".to_string()];
        assert!(train_forest(&[vec![vec![1.0, 2.0]]], &[1.0], &cols, None, &cfg()).is_err());
    }

    #[test]
    fn trained_model_round_trip() {
        let cols: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let windows: Vec<Vec<Vec<f64>>> = (0..40)
            .map(|i| vec![vec![i as f64, 1.0, (i % 3) as f64]])
            .collect();
        let y: Vec<f64> = (0..40).map(|i| 2.0 * i as f64).collect();
        let m = train_forest(&windows, &y, &cols, None, &cfg()).unwrap();
        assert_eq!(m.standardizer.dropped, vec![1]);
        let back = TrainedModel::<f64>::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let p = back.predict(&windows[10]).unwrap();
        assert!((p.value - 20.0).abs() < 3.0);
        assert!(back.predict(&[vec![1.0, 2.0]]).is_err());
    }
}
