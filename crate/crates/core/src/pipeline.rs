//! End-to-end comparison grid: filter, optional de-randomization, optional
//! passenger classification, features, windows, training and evaluation for
//! every variant, on sessions split into disjoint train and test sets.
//!
//! Stage outputs shared by several variants (filtered captures, derandomized
//! captures, classified captures) are computed once. Every random choice is
//! seeded from the root seed and a label naming the stage or variant, so
//! adding a variant leaves the others untouched.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capture::Capture;
use crate::classify::{classify_capture, passengers_only, ClassifyMode, FuzzyConfig};
use crate::derandomize::{
    derandomize_capture, AssignmentPolicy, ClusterParams, ClusteringMethod, DerandomizeConfig, PolicyMode,
};
use crate::error::{Error, Result};
use crate::estimators::{train_forest, train_neural, windows_as, ForestConfig, ModelKind, NeuralConfig};
use crate::features::{build_windows, extract_series, FeatureConfig, WindowSet};
use crate::filter::{run_pipeline as run_filter, FilterConfig};
use crate::ground_truth::{aggregate_occupancy, CountForm, OccupancySeries};
use crate::metrics::{evaluate, EvalReport, Mape};
use crate::oui::OuiTable;
use crate::seed;
use crate::simulator::{simulate, SimConfig};

/// One grid cell. Fields are kept as text so a row naming an unknown method
/// or model fails on its own instead of rejecting the whole configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    /// `none`, `dbscan`, `dbscan_l` or `optics`.
    pub clustering: String,
    /// `mult` or `sngl`; ignored without clustering.
    #[serde(default = "default_policy")]
    pub policy: String,
    /// `none`, `fcm` or `kernel_fcm`.
    pub fuzzy: String,
    /// `forest` or `neural`.
    pub model: String,
    #[serde(default)]
    pub lags: usize,
}

fn default_policy() -> String {
    "mult".into()
}

impl Variant {
    pub fn new(clustering: &str, policy: &str, fuzzy: &str, model: &str, lags: usize) -> Self {
        Variant {
            clustering: clustering.into(),
            policy: policy.into(),
            fuzzy: fuzzy.into(),
            model: model.into(),
            lags,
        }
    }

    pub fn name(&self) -> String {
        let policy = if self.clustering == "none" { "-" } else { &self.policy };
        format!("{}/{}/{}/{}/t{}", self.clustering, policy, self.fuzzy, self.model, self.lags)
    }

    fn clustering_key(&self) -> Result<Option<(ClusteringMethod, PolicyMode)>> {
        if self.clustering == "none" {
            return Ok(None);
        }
        Ok(Some((self.clustering.parse()?, self.policy.parse()?)))
    }
}

/// Forest on every clustering x policy x fuzzy combination at `t = 0`, plus
/// the network without clustering or fuzzy at `t = 0` and `t = 6`.
pub fn default_grid() -> Vec<Variant> {
    let mut grid = Vec::new();
    for fuzzy in ["none", "fcm", "kernel_fcm"] {
        grid.push(Variant::new("none", "mult", fuzzy, "forest", 0));
    }
    for clustering in ["dbscan", "dbscan_l", "optics"] {
        for policy in ["mult", "sngl"] {
            for fuzzy in ["none", "fcm", "kernel_fcm"] {
                grid.push(Variant::new(clustering, policy, fuzzy, "forest", 0));
            }
        }
    }
    grid.push(Variant::new("none", "mult", "none", "neural", 0));
    grid.push(Variant::new("none", "mult", "none", "neural", 6));
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub sim: SimConfig,
    pub filter: FilterConfig,
    pub cluster: ClusterParams,
    pub avg: f64,
    pub normalize_by_span: bool,
    pub fuzzy: FuzzyConfig,
    pub passenger_threshold: f64,
    pub features: FeatureConfig,
    pub forest: ForestConfig,
    pub neural: NeuralConfig,
    /// Share of sessions, taken from the end, held out for testing.
    pub test_fraction: f64,
    pub variants: Vec<Variant>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            sim: SimConfig {
                trips: 16,
                ..SimConfig::default()
            },
            filter: FilterConfig::default(),
            cluster: ClusterParams::new(0.3, 4),
            avg: 20.0,
            normalize_by_span: false,
            fuzzy: FuzzyConfig::default(),
            passenger_threshold: 0.5,
            features: FeatureConfig::default(),
            forest: ForestConfig::default(),
            neural: NeuralConfig {
                learning_rate: 3e-4,
                weight_decay: 1.0,
                ..NeuralConfig::default()
            },
            test_fraction: 0.25,
            variants: default_grid(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::Config("at least one variant is required".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        self.filter.validate()?;
        self.fuzzy.validate()?;
        AssignmentPolicy::new(PolicyMode::Mult, self.avg)?;
        Ok(())
    }
}

/// One recorded trip: the raw capture, its count form and the per-minute
/// target the models learn.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub capture: Capture,
    pub count_form: CountForm,
    pub target: OccupancySeries,
}

impl Session {
    /// Target taken from the count form.
    pub fn from_form(capture: Capture, count_form: CountForm) -> Self {
        let target = aggregate_occupancy(&count_form);
        Session {
            capture,
            count_form,
            target,
        }
    }
}

/// Test sessions are the last `ceil(n * fraction)` ones, at least one and
/// leaving at least one for training.
pub fn split_sessions(n: usize, test_fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 sessions to split, got {n}"
        )));
    }
    let n_test = ((n as f64 * test_fraction).ceil() as usize).clamp(1, n - 1);
    Ok(((0..n - n_test).collect(), (n - n_test..n).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub session: String,
    pub minute: i64,
    pub truth: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantOutcome {
    pub variant: Variant,
    pub train_samples: usize,
    pub test_samples: usize,
    pub result: std::result::Result<EvalReport<f64>, String>,
    pub predictions: Vec<PredictionRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub outcomes: Vec<VariantOutcome>,
}

type Staged = std::result::Result<Vec<Capture>, String>;

fn classify_key(v: &Variant) -> Result<(Option<(ClusteringMethod, PolicyMode)>, ClassifyMode)> {
    Ok((v.clustering_key()?, v.fuzzy.parse()?))
}

fn cluster_label(key: Option<(ClusteringMethod, PolicyMode)>) -> String {
    match key {
        None => "none".into(),
        Some((m, p)) => format!("{m}/{p}"),
    }
}

/// Runs every variant over the given sessions.
pub fn run_sessions(sessions: &[Session], config: &PipelineConfig) -> Result<PipelineResult> {
    config.validate()?;
    let (train_idx, test_idx) = split_sessions(sessions.len(), config.test_fraction)?;
    let table = OuiTable::bundled();

    let filtered: Vec<Capture> = sessions
        .par_iter()
        .map(|s| run_filter(&s.capture, &config.filter, &table).map(|(c, _)| c))
        .collect::<Result<_>>()?;

    let mut cluster_keys = BTreeSet::new();
    let mut classify_keys = BTreeSet::new();
    for v in &config.variants {
        if let Ok(key) = classify_key(v) {
            cluster_keys.insert(key.0);
            classify_keys.insert(key);
        }
    }
    let cluster_keys: Vec<_> = cluster_keys.into_iter().collect();
    let derandomized: HashMap<_, Staged> = cluster_keys
        .par_iter()
        .map(|&key| {
            let out = match key {
                None => Ok(filtered.clone()),
                Some((method, mode)) => {
                    let policy = AssignmentPolicy {
                        mode,
                        avg: config.avg,
                        normalize_by_span: config.normalize_by_span,
                    };
                    let cfg = DerandomizeConfig::new(method, config.cluster, policy);
                    filtered
                        .par_iter()
                        .map(|c| derandomize_capture(c, &cfg).map(|(c, _)| c))
                        .collect::<Result<Vec<_>>>()
                        .map_err(|e| e.to_string())
                }
            };
            (key, out)
        })
        .collect();

    let classify_keys: Vec<_> = classify_keys.into_iter().collect();
    let classified: HashMap<_, Staged> = classify_keys
        .par_iter()
        .map(|&(ckey, mode)| {
            let out = derandomized[&ckey].clone().and_then(|caps| {
                caps.par_iter()
                    .enumerate()
                    .map(|(i, c)| {
                        let label = format!("classify/{}/{mode}", cluster_label(ckey));
                        let fuzzy = FuzzyConfig {
                            seed: seed::derive_indexed(config.seed, &label, i as u64),
                            ..config.fuzzy
                        };
                        classify_capture(c, mode, &fuzzy, config.passenger_threshold)
                            .map(|(c, _)| passengers_only(&c))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| e.to_string())
            });
            ((ckey, mode), out)
        })
        .collect();

    let mut features = config.features.clone();
    if features.stations.is_empty() {
        let names: BTreeSet<String> = sessions
            .iter()
            .flat_map(|s| s.count_form.rows.iter().map(|r| r.station_name.clone()))
            .collect();
        features.stations = names.into_iter().collect();
    }

    let outcomes = config
        .variants
        .par_iter()
        .map(|v| {
            let captures = classify_key(v)
                .map_err(|e| e.to_string())
                .and_then(|k| classified[&k].clone());
            run_variant(v, captures, sessions, &train_idx, &test_idx, &features, config)
        })
        .collect();
    Ok(PipelineResult { outcomes })
}

fn run_variant(
    variant: &Variant,
    captures: Staged,
    sessions: &[Session],
    train_idx: &[usize],
    test_idx: &[usize],
    features: &FeatureConfig,
    config: &PipelineConfig,
) -> VariantOutcome {
    let mut outcome = VariantOutcome {
        variant: variant.clone(),
        train_samples: 0,
        test_samples: 0,
        result: Err(String::new()),
        predictions: Vec::new(),
    };
    let run = || -> std::result::Result<(), String> {
        let kind: ModelKind = variant.model.parse().map_err(|e: Error| e.to_string())?;
        let captures = captures?;
        let windows: Vec<WindowSet> = sessions
            .iter()
            .zip(&captures)
            .map(|(s, c)| {
                let fv = extract_series(
                    c,
                    &s.count_form.stations_by_minute(),
                    s.count_form.minute_span(),
                    features,
                );
                build_windows(&fv, &s.target, variant.lags as i64)
            })
            .collect::<Result<_>>()
            .map_err(|e| e.to_string())?;
        let gather = |idx: &[usize]| {
            let mut set = WindowSet::default();
            for &i in idx {
                set.samples.extend(windows[i].samples.iter().cloned());
                set.short_runs += windows[i].short_runs;
            }
            set
        };
        let train = gather(train_idx);
        let (train_x, train_y) = windows_as::<f64>(&train);
        outcome.train_samples = train_x.len();
        let columns = features.column_names();
        let variant_seed = seed::derive(config.seed, &variant.name());
        let model = match kind {
            ModelKind::Forest => {
                let cfg = ForestConfig {
                    seed: variant_seed,
                    ..config.forest
                };
                train_forest(&train_x, &train_y, &columns, None, &cfg)
            }
            ModelKind::Neural => {
                let cfg = NeuralConfig {
                    lags: variant.lags,
                    kernel_width: config.neural.kernel_width.min(variant.lags + 1),
                    seed: variant_seed,
                    ..config.neural
                };
                train_neural(&train_x, &train_y, &columns, &cfg)
            }
        }
        .map_err(|e| e.to_string())?;

        let mut truth = Vec::new();
        let mut predicted = Vec::new();
        for &i in test_idx {
            let (x, y) = windows_as::<f64>(&windows[i]);
            for ((w, t), sample) in x.iter().zip(&y).zip(&windows[i].samples) {
                let p = model.predict(w).map_err(|e| e.to_string())?;
                truth.push(*t);
                predicted.push(p.value);
                outcome.predictions.push(PredictionRow {
                    session: sessions[i].capture.session_id.clone(),
                    minute: *sample.minutes.last().expect("non-empty window"),
                    truth: *t,
                    predicted: p.value,
                });
            }
        }
        outcome.test_samples = truth.len();
        outcome.result = Ok(evaluate(&truth, &predicted).map_err(|e| e.to_string())?);
        Ok(())
    };
    if let Err(e) = run() {
        outcome.result = Err(e);
        outcome.predictions.clear();
    }
    outcome
}

/// Simulates the configured trips and runs the grid on them.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineResult> {
    let sim = SimConfig {
        seed: seed::derive(config.seed, "simulate"),
        ..config.sim.clone()
    };
    let run = simulate(&sim)?;
    let sessions: Vec<Session> = run
        .trips
        .into_iter()
        .map(|t| Session {
            capture: t.capture,
            count_form: t.count_form,
            target: t.target,
        })
        .collect();
    run_sessions(&sessions, config)
}

fn mape_text(m: &Mape<f64>) -> String {
    match m {
        Mape::Value(v) => v.to_string(),
        Mape::Infinite => "inf".into(),
    }
}

impl PipelineResult {
    /// One row per variant in configuration order.
    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "variant", "clustering", "policy", "fuzzy", "model", "t", "status", "train_samples",
            "test_samples", "mae", "rmse", "r2", "mape_pct", "nmae_pct", "nrmse_pct", "error",
        ])
        .map_err(csv_err)?;
        for o in &self.outcomes {
            let v = &o.variant;
            let head = [
                v.name(),
                v.clustering.clone(),
                v.policy.clone(),
                v.fuzzy.clone(),
                v.model.clone(),
                v.lags.to_string(),
            ];
            let tail: Vec<String> = match &o.result {
                Ok(r) => vec![
                    "ok".into(),
                    o.train_samples.to_string(),
                    o.test_samples.to_string(),
                    r.mae.to_string(),
                    r.rmse.to_string(),
                    r.r2.map_or("undefined".into(), |x| x.to_string()),
                    mape_text(&r.mape),
                    r.nmae_pct.to_string(),
                    r.nrmse_pct.to_string(),
                    String::new(),
                ],
                Err(e) => {
                    let mut t = vec!["FAILED".to_string(), o.train_samples.to_string(), o.test_samples.to_string()];
                    t.extend(std::iter::repeat_n(String::new(), 6));
                    t.push(e.clone());
                    t
                }
            };
            w.write_record(head.iter().chain(&tail)).map_err(csv_err)?;
        }
        into_string(w)
    }

    pub fn predictions_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["variant", "session", "minute_epoch", "truth", "predicted"])
            .map_err(csv_err)?;
        for o in &self.outcomes {
            let name = o.variant.name();
            for p in &o.predictions {
                w.write_record([
                    name.clone(),
                    p.session.clone(),
                    p.minute.to_string(),
                    p.truth.to_string(),
                    p.predicted.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        into_string(w)
    }

    /// Writes `summary.csv` and `predictions.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            ("summary.csv", self.summary_csv()?),
            ("predictions.csv", self.predictions_csv()?),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&VariantOutcome> {
        self.outcomes.iter().find(|o| o.variant.name() == name)
    }

    /// Test MAE by variant name, for the variants that ran.
    pub fn mae_by_variant(&self) -> BTreeMap<String, f64> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().ok().map(|r| (o.variant.name(), r.mae)))
            .collect()
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

fn into_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
}
