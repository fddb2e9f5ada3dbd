//! `probeflow`: occupancy estimation from Wi-Fi probe requests.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or schema error,
//! 4 numeric failure.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use probeflow_core::capture::Capture;
use probeflow_core::classify::{classify_capture, ClassifyMode, FuzzyConfig, Kernel};
use probeflow_core::derandomize::{
    derandomize_capture, AssignmentPolicy, ClusterFeature, ClusterParams, ClusteringMethod, DerandomizeConfig,
    PolicyMode,
};
use probeflow_core::error::ErrorClass;
use probeflow_core::estimators::{
    select_features_cv, train_forest, train_neural, windows_as, ForestConfig, NeuralConfig,
};
use probeflow_core::features::{
    windows_from_rows, FeatureConfig, FeatureTable, WindowSet, WindowedSample, BASE_COLUMNS,
    DEFAULT_BURST_GAP_US,
};
use probeflow_core::filter::{run_pipeline as run_filter, FilterConfig};
use probeflow_core::ground_truth::{aggregate_occupancy, CountForm, MinuteOccupancy, OccupancySeries};
use probeflow_core::metrics::evaluate;
use probeflow_core::oui::OuiTable;
use probeflow_core::pipeline::{run_pipeline, PipelineConfig};
use probeflow_core::simulator::{simulate, write_run, SimConfig};
use probeflow_core::{Error, Occupancy, Result, TrainedModel64};

#[derive(Parser)]
#[command(name = "probeflow", version, about = "Transit occupancy estimation from Wi-Fi probe requests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled synthetic trips.
    Simulate(SimulateArgs),
    /// Clean a capture down to in-vehicle probe requests.
    Filter(FilterArgs),
    /// Per-minute occupancy from a manual count form.
    AggregateTruth(AggregateArgs),
    /// Replace randomized addresses by cluster representatives.
    Derandomize(DerandomizeArgs),
    /// Mark records as passenger or non-passenger.
    Classify(ClassifyArgs),
    /// Per-minute feature table of a capture.
    Features(FeaturesArgs),
    /// Lagged windows joined with per-minute truth.
    Windows(WindowsArgs),
    /// Fit an occupancy model.
    Train(TrainArgs),
    /// Apply a model to a feature table.
    Predict(PredictArgs),
    /// Error metrics of predictions against truth.
    Evaluate(EvaluateArgs),
    /// Run the comparison grid on simulated trips.
    Pipeline(PipelineArgs),
    /// Print version, file formats or default configuration.
    Info(InfoArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// TOML configuration; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trips: Option<usize>,
    /// Emit only clean on-board traffic with a planted target.
    #[arg(long)]
    planted: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CaptureIn {
    /// Capture in JSON Lines.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "session")]
    session_id: String,
    #[arg(long, default_value = "")]
    line_id: String,
}

impl CaptureIn {
    fn read(&self) -> Result<Capture> {
        Capture::read_jsonl(&self.input, self.session_id.clone(), self.line_id.clone())
    }
}

#[derive(Args)]
struct FilterArgs {
    #[command(flatten)]
    capture: CaptureIn,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = -60, allow_hyphen_values = true)]
    rssi_threshold: i32,
    /// Keep probe requests with a unicast destination.
    #[arg(long)]
    allow_directed: bool,
    #[arg(long)]
    no_oui_filter: bool,
    /// Tab-separated `AA:BB:CC<TAB>vendor` lines replacing the bundled table.
    #[arg(long)]
    oui_table: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long)]
    form: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Dbscan,
    DbscanL,
    Optics,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Mult,
    Sngl,
}

#[derive(Args)]
struct DerandomizeArgs {
    #[command(flatten)]
    capture: CaptureIn,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Neighbourhood radius; the extraction radius for OPTICS.
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    min_pts: usize,
    /// OPTICS reachability bound (defaults to --eps).
    #[arg(long)]
    max_eps: Option<f64>,
    #[arg(long, value_enum)]
    policy: PolicyArg,
    /// Probe requests per device per minute.
    #[arg(long)]
    avg: f64,
    /// Divide a cluster's size by its minute span before applying --avg.
    /// This goes beyond the published assignment rule.
    #[arg(long)]
    normalize_by_span: bool,
    /// Comma-separated subset of rssi,data_rate,captured_length,duration.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    None,
    Fcm,
    KernelFcm,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    capture: CaptureIn,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    mode: ModeArg,
    #[arg(long, default_value_t = 2.0)]
    m: f64,
    /// Gaussian bandwidth; the median pairwise distance when omitted.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
}

#[derive(Args)]
struct FeaturesArgs {
    #[command(flatten)]
    capture: CaptureIn,
    /// Count form giving the trip's minute span and stations.
    #[arg(long)]
    form: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BURST_GAP_US / 1000)]
    burst_gap_ms: u64,
    /// Station universe for the one-hot columns (defaults to the form's).
    #[arg(long, value_delimiter = ',')]
    stations: Option<Vec<String>>,
}

#[derive(Args)]
struct WindowsArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value_t = 6, allow_hyphen_values = true)]
    lags: i64,
    /// Windows as JSON Lines.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Forest,
    Neural,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Feature tables, one per session.
    #[arg(long, required = true)]
    features: Vec<PathBuf>,
    /// Truth tables matching --features in order.
    #[arg(long, required = true)]
    truth: Vec<PathBuf>,
    #[arg(long, default_value_t = 6)]
    lags: usize,
    /// Train every lag count in `LO-HI`, report held-out error and keep the best.
    #[arg(long)]
    sweep_lags: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 16)]
    max_depth: usize,
    /// Choose forest columns by k-fold cross-validation.
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// CSV with `minute_epoch` and `predicted` columns.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trips: Option<usize>,
    #[arg(long)]
    planted: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum InfoTopic {
    Version,
    Formats,
    Config,
}

#[derive(Args)]
struct InfoArgs {
    #[arg(value_enum, default_value = "version")]
    topic: InfoTopic,
}

const FORMATS: &str = "\
capture.jsonl     one JSON object per frame, sorted by timestamp:
                  timestamp_us, frame_type, subtype, source, destination,
                  rssi_dbm, data_rate_mbps, ssid (absent = missing,
                  \"\" = empty), captured_length, duration_us, and optionally
                  representative (MAC) and passenger (bool)
count_form.csv    key,value header lines (checker, route, direction, date,
                  start_station, seats, capacity, on_board_initial), a blank
                  line, then stop,station,transfer,arrival,departure,on,off,load
occupancy.csv     minute_epoch,occupancy
features.csv      minute_epoch, MAC_num, source_random_num, data_rate_mean,
                  SSID_none_num, SSID_missing_num, captured_length_mean,
                  duration_mean, random_bursts, rssi_<i>_<j>..., station_<slug>...
windows.jsonl     one object per sample: minutes, matrix (oldest row first),
                  target
model.json        versioned model: kind, columns, lags, standardizer, target
                  scaling, and either forest trees as flat node arrays or
                  network tensors with names and shapes
predictions.csv   minute_epoch,predicted,clamped
summary.csv       one row per pipeline variant with status and metrics
truth.jsonl       simulator labels: kind=frame lines, then kind=minute lines
";

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Filter(a) => cmd_filter(a),
        Command::AggregateTruth(a) => {
            let form = CountForm::read(&a.form)?;
            for issue in &form.issues {
                eprintln!("warning: {issue:?}");
            }
            aggregate_occupancy(&form).write(&a.out)
        }
        Command::Derandomize(a) => cmd_derandomize(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Features(a) => cmd_features(a),
        Command::Windows(a) => cmd_windows(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Pipeline(a) => cmd_pipeline(a),
        Command::Info(a) => {
            match a.topic {
                InfoTopic::Version => println!("probeflow {}", env!("CARGO_PKG_VERSION")),
                InfoTopic::Formats => print!("{FORMATS}"),
                InfoTopic::Config => {
                    println!("# pipeline configuration (sim section is the simulator's)");
                    print!("{}", PipelineConfig::default().to_toml_string()?);
                }
            }
            Ok(())
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.trips {
        cfg.trips = t;
    }
    cfg.planted |= a.planted;
    let run = simulate(&cfg)?;
    write_run(&run, &a.out_dir)?;
    eprintln!("wrote {} trips to {}", run.trips.len(), a.out_dir.display());
    Ok(())
}

fn cmd_filter(a: FilterArgs) -> Result<()> {
    let capture = a.capture.read()?;
    let table = match &a.oui_table {
        Some(p) => OuiTable::load(p)?,
        None => OuiTable::bundled(),
    };
    let cfg = FilterConfig {
        rssi_threshold: a.rssi_threshold,
        require_broadcast_destination: !a.allow_directed,
        oui_filter_enabled: !a.no_oui_filter,
    };
    let (out, report) = run_filter(&capture, &cfg, &table)?;
    out.write_jsonl(&a.out)?;
    print_json(&report)
}

fn cmd_derandomize(a: DerandomizeArgs) -> Result<()> {
    let capture = a.capture.read()?;
    let method = match a.method {
        MethodArg::Dbscan => ClusteringMethod::Dbscan,
        MethodArg::DbscanL => ClusteringMethod::DbscanL,
        MethodArg::Optics => ClusteringMethod::Optics,
    };
    let mode = match a.policy {
        PolicyArg::Mult => PolicyMode::Mult,
        PolicyArg::Sngl => PolicyMode::Sngl,
    };
    let mut policy = AssignmentPolicy::new(mode, a.avg)?;
    policy.normalize_by_span = a.normalize_by_span;
    let params = ClusterParams {
        eps: a.eps,
        min_pts: a.min_pts,
        max_eps: a.max_eps,
    };
    let mut cfg = DerandomizeConfig::new(method, params, policy);
    if let Some(names) = &a.features {
        cfg.features = names
            .iter()
            .map(|n| n.parse::<ClusterFeature>())
            .collect::<Result<_>>()?;
    }
    let (out, report) = derandomize_capture(&capture, &cfg)?;
    out.write_jsonl(&a.out)?;
    print_json(&report)
}

fn cmd_classify(a: ClassifyArgs) -> Result<()> {
    let capture = a.capture.read()?;
    let mode = match a.mode {
        ModeArg::None => ClassifyMode::None,
        ModeArg::Fcm => ClassifyMode::Fcm,
        ModeArg::KernelFcm => ClassifyMode::KernelFcm,
    };
    let cfg = FuzzyConfig {
        m: a.m,
        max_iter: a.max_iter,
        tol: a.tol,
        seed: a.seed,
        kernel: if matches!(mode, ClassifyMode::KernelFcm) {
            Kernel::Gaussian { sigma: a.sigma }
        } else {
            Kernel::None
        },
        ..FuzzyConfig::default()
    };
    cfg.validate()?;
    let (out, report) = classify_capture(&capture, mode, &cfg, a.threshold)?;
    out.write_jsonl(&a.out)?;
    print_json(&report)
}

fn cmd_features(a: FeaturesArgs) -> Result<()> {
    let capture = probeflow_core::classify::passengers_only(&a.capture.read()?);
    let form = CountForm::read(&a.form)?;
    let stations = match a.stations {
        Some(s) => s,
        None => form
            .rows
            .iter()
            .map(|r| r.station_name.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let cfg = FeatureConfig {
        burst_gap_us: a.burst_gap_ms * 1000,
        ..FeatureConfig::with_stations(stations)
    };
    let fv = probeflow_core::features::extract_series(
        &capture,
        &form.stations_by_minute(),
        form.minute_span(),
        &cfg,
    );
    FeatureTable::from_vectors(&fv, &cfg).write(&a.out)
}

fn table_windows(table: &FeatureTable, truth: &OccupancySeries, lags: i64) -> Result<WindowSet> {
    let set = windows_from_rows(&table.minutes, &table.rows, truth, lags)?;
    if set.short_runs > 0 {
        eprintln!(
            "warning: {} run(s) of minutes are shorter than {} and yield no window",
            set.short_runs,
            lags + 1
        );
    }
    Ok(set)
}

fn cmd_windows(a: WindowsArgs) -> Result<()> {
    let table = FeatureTable::read(&a.features)?;
    let truth = OccupancySeries::read(&a.truth)?;
    let set = table_windows(&table, &truth, a.lags)?;
    let mut out = String::new();
    for s in &set.samples {
        out.push_str(&serde_json::to_string(s)?);
        out.push('\n');
    }
    write_text(&a.out, &out)?;
    eprintln!("{} windows", set.samples.len());
    Ok(())
}

type Sessions = Vec<(FeatureTable, OccupancySeries)>;

fn load_sessions(a: &TrainArgs) -> Result<(Vec<String>, Sessions)> {
    if a.features.len() != a.truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature tables but {} truth tables",
            a.features.len(),
            a.truth.len()
        )));
    }
    let mut columns: Option<Vec<String>> = None;
    let mut sessions = Vec::new();
    for (f, t) in a.features.iter().zip(&a.truth) {
        let table = FeatureTable::read(f)?;
        match &columns {
            None => columns = Some(table.columns.clone()),
            Some(c) if *c != table.columns => {
                return Err(Error::Shape(format!("{} has different columns", f.display())));
            }
            _ => {}
        }
        sessions.push((table, OccupancySeries::read(t)?));
    }
    Ok((columns.unwrap_or_default(), sessions))
}

fn gather(sessions: &[(FeatureTable, OccupancySeries)], lags: usize) -> Result<WindowSet> {
    let mut set = WindowSet::default();
    for (table, truth) in sessions {
        let s = table_windows(table, truth, lags as i64)?;
        set.samples.extend(s.samples);
        set.short_runs += s.short_runs;
    }
    Ok(set)
}

fn fit(
    a: &TrainArgs,
    columns: &[String],
    samples: &[WindowedSample],
    lags: usize,
    selected: Option<&[usize]>,
) -> Result<TrainedModel64> {
    let set = WindowSet {
        samples: samples.to_vec(),
        short_runs: 0,
    };
    let (x, y) = windows_as::<f64>(&set);
    match a.model {
        ModelArg::Forest => {
            let cfg = ForestConfig {
                n_trees: a.trees,
                max_depth: a.max_depth,
                seed: a.seed,
                ..ForestConfig::default()
            };
            train_forest(&x, &y, columns, selected, &cfg)
        }
        ModelArg::Neural => {
            let cfg = NeuralConfig {
                lags,
                kernel_width: NeuralConfig::default().kernel_width.min(lags + 1),
                epochs: a.epochs,
                learning_rate: a.learning_rate,
                batch_size: a.batch_size,
                seed: a.seed,
                ..NeuralConfig::default()
            };
            train_neural(&x, &y, columns, &cfg)
        }
    }
}

fn parse_range(text: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidArgument(format!("expected LO-HI, got `{text}`"));
    let (lo, hi) = text.split_once('-').ok_or_else(bad)?;
    let lo: usize = lo.trim().parse().map_err(|_| bad())?;
    let hi: usize = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let (columns, sessions) = load_sessions(&a)?;
    let lags = match &a.sweep_lags {
        None => a.lags,
        Some(range) => {
            let (lo, hi) = parse_range(range)?;
            let mut best: Option<(usize, f64)> = None;
            println!("lags,holdout_mae");
            for t in lo..=hi {
                let set = gather(&sessions, t)?;
                let n_hold = set.samples.len() / 5;
                if n_hold == 0 {
                    return Err(Error::EmptyInput);
                }
                let (fit_s, hold) = set.samples.split_at(set.samples.len() - n_hold);
                let model = fit(&a, &columns, fit_s, t, None)?;
                let hold_set = WindowSet {
                    samples: hold.to_vec(),
                    short_runs: 0,
                };
                let (hx, hy) = windows_as::<f64>(&hold_set);
                let preds: Vec<f64> = model.predict_many(&hx)?.iter().map(|p| p.value).collect();
                let mae = probeflow_core::metrics::mae(&hy, &preds)?;
                println!("{t},{mae}");
                if best.is_none_or(|(_, m)| mae < m) {
                    best = Some((t, mae));
                }
            }
            best.map(|(t, _)| t).expect("non-empty range")
        }
    };
    let set = gather(&sessions, lags)?;
    let selected = match (a.cv_folds, a.model) {
        (Some(k), ModelArg::Forest) => {
            let base: Vec<usize> = (0..BASE_COLUMNS.len().min(columns.len())).collect();
            let with_bins: Vec<usize> = (0..columns.len())
                .filter(|&c| c < BASE_COLUMNS.len() || columns[c].starts_with("rssi_"))
                .collect();
            let all: Vec<usize> = (0..columns.len()).collect();
            let candidates = vec![all, with_bins, base];
            let rows: Vec<Vec<f64>> = set
                .samples
                .iter()
                .map(|s| s.matrix.last().cloned().unwrap_or_default())
                .collect();
            let targets: Vec<f64> = set.samples.iter().map(|s| s.target).collect();
            let cfg = ForestConfig {
                n_trees: 20,
                seed: a.seed,
                ..ForestConfig::default()
            };
            let cv = select_features_cv(&rows, &targets, &candidates, k, &cfg)?;
            eprintln!("cv scores {:?}, chose candidate {}", cv.scores, cv.best);
            Some(candidates[cv.best].clone())
        }
        _ => None,
    };
    let model = fit(&a, &columns, &set.samples, lags, selected.as_deref())?;
    model.save(&a.out)?;
    eprintln!(
        "trained {} on {} windows with lags {}",
        model.kind, model.training_report.samples, lags
    );
    Ok(())
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = TrainedModel64::load(&a.model)?;
    let table = FeatureTable::read(&a.features)?;
    if table.columns != model.columns {
        return Err(Error::Shape("feature columns differ from the model's".into()));
    }
    // Windows need a target per minute; predictions ignore it.
    let placeholder = OccupancySeries {
        entries: table
            .minutes
            .iter()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(|&minute| MinuteOccupancy {
                minute,
                occupancy: Occupancy::from_integer(0),
            })
            .collect(),
    };
    let set = table_windows(&table, &placeholder, model.lags as i64)?;
    let (x, _) = windows_as::<f64>(&set);
    let mut out = String::from("minute_epoch,predicted,clamped\n");
    for (w, s) in x.iter().zip(&set.samples) {
        let p = model.predict(w)?;
        out.push_str(&format!("{},{},{}\n", s.minutes.last().expect("window"), p.value, p.clamped));
    }
    write_text(&a.out, &out)
}

fn read_predictions(path: &Path) -> Result<Vec<(i64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::EmptyInput)?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::schema(1, format!("missing column `{name}`")))
    };
    let (mi, pi) = (find("minute_epoch")?, find("predicted")?);
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            let minute = f.get(mi).and_then(|v| v.parse().ok());
            let value = f.get(pi).and_then(|v| v.parse().ok());
            minute
                .zip(value)
                .ok_or_else(|| Error::schema(i + 1, "bad prediction row"))
        })
        .collect()
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let preds = read_predictions(&a.predictions)?;
    let truth = OccupancySeries::read(&a.truth)?;
    let mut y = Vec::new();
    let mut y_hat = Vec::new();
    for (m, p) in preds {
        if let Some(t) = truth.get(m) {
            y.push(probeflow_core::ground_truth::occupancy_to_f64(t));
            y_hat.push(p);
        }
    }
    if y.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let report = evaluate(&y, &y_hat)?;
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &a.out {
        write_text(out, &text)?;
    }
    println!("{text}");
    Ok(())
}

fn cmd_pipeline(a: PipelineArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.trips {
        cfg.sim.trips = t;
    }
    cfg.sim.planted |= a.planted;
    let result = run_pipeline(&cfg)?;
    result.write(&a.out_dir)?;
    let failed = result.outcomes.iter().filter(|o| o.result.is_err()).count();
    eprintln!(
        "{} variants, {} failed; wrote {}",
        result.outcomes.len(),
        failed,
        a.out_dir.join("summary.csv").display()
    );
    if failed == result.outcomes.len() {
        let first = result.outcomes[0].result.as_ref().err().cloned().unwrap_or_default();
        return Err(Error::Config(format!("every variant failed, first: {first}")));
    }
    Ok(())
}
