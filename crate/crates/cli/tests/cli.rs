use std::path::Path;
use std::process::{Command, Output};

fn probeflow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_probeflow"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn probeflow")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = probeflow(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], cwd: &Path) -> i32 {
    probeflow(args, cwd).status.code().unwrap()
}

#[test]
fn version_and_info() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ok(&["--version"], dir.path()).starts_with("probeflow "));
    assert!(ok(&["info", "formats"], dir.path()).contains("minute_epoch,occupancy"));
    assert!(ok(&["info", "config"], dir.path()).contains("[sim]"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["nope"], dir.path()), 2);
    assert_eq!(code(&["filter"], dir.path()), 2);
    assert_eq!(code(&["train", "--model", "svm", "--out", "m"], dir.path()), 2);
}

#[test]
fn missing_input_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["aggregate-truth", "--form", "absent.csv", "--out", "o.csv"], dir.path()), 3);
}

#[test]
fn bad_config_key_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "tripz = 3\n").unwrap();
    assert_eq!(code(&["simulate", "--config", "c.toml", "--out-dir", "s"], dir.path()), 3);
}

#[test]
fn end_to_end_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["simulate", "--trips", "2", "--seed", "5", "--out-dir", "sim"], d);
    for k in 0..2 {
        let t = format!("sim/trip_00{k}");
        ok(&["filter", "--input", &format!("{t}/capture.jsonl"), "--out", &format!("f{k}.jsonl")], d);
        ok(
            &["aggregate-truth", "--form", &format!("{t}/count_form.csv"), "--out", &format!("o{k}.csv")],
            d,
        );
        let report = ok(
            &[
                "derandomize", "--input", &format!("f{k}.jsonl"), "--out", &format!("d{k}.jsonl"),
                "--method", "optics", "--eps", "0.3", "--min-pts", "4", "--policy", "sngl", "--avg", "20",
            ],
            d,
        );
        assert!(report.contains("randomized_records"));
        ok(
            &["classify", "--input", &format!("d{k}.jsonl"), "--out", &format!("c{k}.jsonl"), "--mode", "fcm"],
            d,
        );
        ok(
            &[
                "features", "--input", &format!("c{k}.jsonl"), "--form", &format!("{t}/count_form.csv"),
                "--out", &format!("x{k}.csv"),
            ],
            d,
        );
    }
    ok(&["windows", "--features", "x0.csv", "--truth", "o0.csv", "--lags", "3", "--out", "w.jsonl"], d);
    let first = std::fs::read_to_string(d.join("w.jsonl")).unwrap();
    let sample: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(sample["matrix"].as_array().unwrap().len(), 4);

    ok(
        &[
            "train", "--model", "forest", "--trees", "20", "--features", "x0.csv", "--truth", "o0.csv",
            "--lags", "2", "--out", "m.json",
        ],
        d,
    );
    ok(&["predict", "--model", "m.json", "--features", "x1.csv", "--out", "p.csv"], d);
    let preds = std::fs::read_to_string(d.join("p.csv")).unwrap();
    assert!(preds.starts_with("minute_epoch,predicted,clamped\n"));
    let report: serde_json::Value =
        serde_json::from_str(&ok(&["evaluate", "--predictions", "p.csv", "--truth", "o1.csv"], d)).unwrap();
    assert!(report["mae"].as_f64().unwrap() >= 0.0);
    assert_eq!(report["n"].as_u64().unwrap() as usize, preds.lines().count() - 1);
}

#[test]
fn predict_rejects_foreign_columns() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("x.csv"), "minute_epoch,a\n1,1\n2,2\n3,3\n4,4\n").unwrap();
    std::fs::write(d.join("y.csv"), "minute_epoch,b\n1,1\n").unwrap();
    std::fs::write(d.join("o.csv"), "minute_epoch,occupancy\n1,1\n2,2\n3,3\n4,4\n").unwrap();
    ok(
        &[
            "train", "--model", "forest", "--trees", "3", "--features", "x.csv", "--truth", "o.csv",
            "--lags", "0", "--out", "m.json",
        ],
        d,
    );
    assert_eq!(code(&["predict", "--model", "m.json", "--features", "y.csv", "--out", "p.csv"], d), 3);
}

#[test]
fn pipeline_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("p.toml"),
        "test_fraction = 0.5\n[sim]\ntrips = 2\n[[variants]]\nclustering = \"none\"\nfuzzy = \"none\"\nmodel = \"forest\"\nlags = 0\n",
    )
    .unwrap();
    ok(&["pipeline", "--config", "p.toml", "--seed", "9", "--out-dir", "out"], d);
    let summary = std::fs::read_to_string(d.join("out/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().starts_with("none/-/none/forest/t0,"));
    assert!(d.join("out/predictions.csv").exists());
}
