//! Occupancy regressors: a bagged regression-tree ensemble and a
//! convolutional recurrent network, behind one model file format.
//!
//! Inputs are always windows of `lags + 1` raw feature rows (oldest first).
//! The forest sees a window flattened into one row; the network consumes it
//! as a sequence.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::WindowSet;
use crate::Scalar;

pub mod cv;
pub mod forest;
pub mod neural;

pub use cv::{select_features_cv, CvResult};
pub use forest::{train_forest, Forest, ForestConfig};
pub use neural::{check_gradients, train_neural, NetShape, Network, NeuralConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Forest,
    Neural,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "forest" => Ok(ModelKind::Forest),
            "neural" => Ok(ModelKind::Neural),
            _ => Err(Error::Unknown {
                kind: "model",
                name: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Forest => "forest",
            ModelKind::Neural => "neural",
        })
    }
}

/// Per-column z-scoring fit on training rows. Columns with zero variance
/// are dropped and listed in `dropped`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Standardizer<T> {
    pub columns: Vec<usize>,
    pub mean: Vec<T>,
    pub std: Vec<T>,
    pub dropped: Vec<usize>,
}

impl<T: Scalar> Standardizer<T> {
    /// Fits over `candidates` (indices into each row).
    pub fn fit(rows: &[&[T]], candidates: &[usize]) -> Self {
        let n = T::from_usize_lossy(rows.len().max(1));
        let mut s = Standardizer {
            columns: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
            dropped: Vec::new(),
        };
        for &c in candidates {
            let mean = rows.iter().map(|r| r[c]).sum::<T>() / n;
            let var = rows.iter().map(|r| (r[c] - mean) * (r[c] - mean)).sum::<T>() / n;
            let sd = var.sqrt();
            if sd > T::zero() && sd.is_finite() {
                s.columns.push(c);
                s.mean.push(mean);
                s.std.push(sd);
            } else {
                s.dropped.push(c);
            }
        }
        s
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn transform(&self, row: &[T]) -> Vec<T> {
        self.columns
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&c, (&m, &s))| (row[c] - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Per-epoch training loss (network) on standardized targets.
    #[serde(default)]
    pub losses: Vec<f64>,
    /// Per-epoch loss on the held-out tail of the training windows.
    #[serde(default)]
    pub validation_losses: Vec<f64>,
    /// Epoch whose parameters were kept.
    #[serde(default)]
    pub best_epoch: Option<usize>,
    /// Out-of-bag mean absolute error (forest with bootstrap).
    #[serde(default)]
    pub oob_mae: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainedModel<T> {
    pub format_version: u32,
    pub kind: ModelKind,
    /// Names of the raw feature columns a window row carries.
    pub columns: Vec<String>,
    pub lags: usize,
    /// Raw columns chosen for the model before variance screening.
    pub selected_features: Vec<usize>,
    pub standardizer: Standardizer<T>,
    pub target_mean: T,
    pub target_std: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forest: Option<Forest<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<Network<T>>,
    pub training_report: TrainingReport,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T> {
    pub value: T,
    /// The raw output was negative and was replaced by zero.
    pub clamped: bool,
}

pub fn clamp_prediction<T: Scalar>(raw: T) -> Prediction<T> {
    if raw < T::zero() {
        Prediction {
            value: T::zero(),
            clamped: true,
        }
    } else {
        Prediction {
            value: raw,
            clamped: false,
        }
    }
}

/// Windows converted to the scalar type: `(windows, targets)`.
pub fn windows_as<T: Scalar>(set: &WindowSet) -> (Vec<Vec<Vec<T>>>, Vec<T>) {
    let windows = set
        .samples
        .iter()
        .map(|s| {
            s.matrix
                .iter()
                .map(|row| row.iter().map(|&v| T::lit(v)).collect())
                .collect()
        })
        .collect();
    let targets = set.samples.iter().map(|s| T::lit(s.target)).collect();
    (windows, targets)
}

pub(crate) fn check_windows<T>(windows: &[Vec<Vec<T>>], targets: &[T], width: usize) -> Result<usize> {
    if windows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: windows.len(),
            right: targets.len(),
        });
    }
    let Some(first) = windows.first() else {
        return Err(Error::EmptyInput);
    };
    let len = first.len();
    if len == 0 {
        return Err(Error::Shape("windows must hold at least one row".into()));
    }
    for (i, w) in windows.iter().enumerate() {
        if w.len() != len || w.iter().any(|r| r.len() != width) {
            return Err(Error::Shape(format!(
                "window {i} is not {len} x {width}"
            )));
        }
    }
    Ok(len)
}

impl<T: Scalar> TrainedModel<T> {
    pub fn window_len(&self) -> usize {
        self.lags + 1
    }

    /// Prediction for one raw window of `lags + 1` rows.
    pub fn predict(&self, window: &[Vec<T>]) -> Result<Prediction<T>> {
        if window.len() != self.window_len() {
            return Err(Error::Shape(format!(
                "window has {} rows, model expects {}",
                window.len(),
                self.window_len()
            )));
        }
        if let Some(r) = window.iter().find(|r| r.len() != self.columns.len()) {
            return Err(Error::Shape(format!(
                "row has {} features, model expects {}",
                r.len(),
                self.columns.len()
            )));
        }
        let rows: Vec<Vec<T>> = window.iter().map(|r| self.standardizer.transform(r)).collect();
        let raw = match self.kind {
            ModelKind::Forest => {
                let forest = self.forest.as_ref().ok_or_else(|| Error::Config("model has no trees".into()))?;
                forest.predict(&rows.concat())
            }
            ModelKind::Neural => {
                let net = self
                    .network
                    .as_ref()
                    .ok_or_else(|| Error::Config("model has no network".into()))?;
                net.forward(&rows) * self.target_std + self.target_mean
            }
        };
        if !raw.is_finite() {
            return Err(Error::Numeric("model produced a non-finite output".into()));
        }
        Ok(clamp_prediction(raw))
    }

    pub fn predict_many(&self, windows: &[Vec<Vec<T>>]) -> Result<Vec<Prediction<T>>> {
        windows.iter().map(|w| self.predict(w)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardizer_drops_constant_columns() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 5.0, 0.0], vec![3.0, 5.0, 2.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let s = Standardizer::fit(&refs, &[0, 1, 2]);
        assert_eq!(s.columns, vec![0, 2]);
        assert_eq!(s.dropped, vec![1]);
        assert_eq!(s.transform(&[3.0, 9.0, 0.0]), vec![1.0, -1.0]);
    }

    #[test]
    fn refit_on_other_split_changes_transform() {
        let train: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let test: Vec<Vec<f64>> = (20..25).map(|i| vec![i as f64]).collect();
        let a = Standardizer::fit(&train.iter().map(Vec::as_slice).collect::<Vec<_>>(), &[0]);
        let b = Standardizer::fit(&test.iter().map(Vec::as_slice).collect::<Vec<_>>(), &[0]);
        assert_ne!(a.transform(&[22.0]), b.transform(&[22.0]));
    }

    #[test]
    fn clamp_rule() {
        assert_eq!(clamp_prediction(-1.2), Prediction { value: 0.0, clamped: true });
        assert_eq!(clamp_prediction(4.0), Prediction { value: 4.0, clamped: false });
    }

    #[test]
    fn model_kind_names() {
        assert_eq!("neural".parse::<ModelKind>().unwrap(), ModelKind::Neural);
        assert!("xgboost".parse::<ModelKind>().is_err());
    }
}
