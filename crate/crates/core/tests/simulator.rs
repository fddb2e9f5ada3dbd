use std::collections::BTreeMap;

use probeflow_core::capture::Capture;
use probeflow_core::ground_truth::{aggregate_occupancy, CountForm, OccupancySeries};
use probeflow_core::simulator::{replay_check, simulate, write_run, FrameOrigin, SimConfig};

fn config(trips: usize) -> SimConfig {
    SimConfig {
        seed: 11,
        trips,
        ..SimConfig::default()
    }
}

#[test]
fn randomized_device_share_matches_configuration() {
    let run = simulate(&SimConfig {
        start_time: "00:05:00".into(),
        ..config(36)
    })
    .unwrap();
    let mut devices: BTreeMap<(usize, u64), bool> = BTreeMap::new();
    for (k, trip) in run.trips.iter().enumerate() {
        for (r, l) in trip.capture.records.iter().zip(&trip.labels) {
            if let (FrameOrigin::Onboard, Some(d)) = (l.origin, l.device) {
                let randomized = r.source.is_randomized();
                let seen = *devices.entry((k, d)).or_insert(randomized);
                assert_eq!(seen, randomized, "device mixes address kinds");
            }
        }
    }
    let share = devices.values().filter(|&&r| r).count() as f64 / devices.len() as f64;
    assert!(devices.len() > 1000, "{} devices", devices.len());
    assert!((share - 0.975).abs() <= 0.01, "share {share}");
}

#[test]
fn every_trip_replays() {
    for trip in simulate(&config(4)).unwrap().trips {
        let report = replay_check(&trip);
        assert!(report.passed(), "{:?}", report.failures);
        assert_eq!(trip.target, trip.occupancy);
    }
}

#[test]
fn written_run_reads_back() {
    let run = simulate(&config(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run(&run, dir.path()).unwrap();
    assert!(dir.path().join("manifest.txt").exists());
    for (k, trip) in run.trips.iter().enumerate() {
        let t = dir.path().join(format!("trip_{k:03}"));
        let cap = Capture::read_jsonl(&t.join("capture.jsonl"), trip.capture.session_id.clone(), trip.capture.line_id.clone()).unwrap();
        assert_eq!(cap, trip.capture);
        let form = CountForm::read(&t.join("count_form.csv")).unwrap();
        assert_eq!(aggregate_occupancy(&form), trip.occupancy);
        assert_eq!(OccupancySeries::read(&t.join("target.csv")).unwrap(), trip.target);
        let truth = std::fs::read_to_string(t.join("truth.jsonl")).unwrap();
        assert_eq!(truth.lines().filter(|l| l.contains("\"frame\"")).count(), trip.labels.len());
    }
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = config(3).planted();
    let back = SimConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
    assert_eq!(back, cfg);
    assert!(SimConfig::from_toml_str("no_such_key = 1\n").is_err());
}
