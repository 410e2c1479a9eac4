mod support;

use std::io::Write;
use std::sync::Arc;

use proptest::prelude::*;
use serde_json::{Map, Value};

use darkit_core::tracker::{downsample, synth_loss, Point, SynthSpec, Tracker, LOG_FILE};

fn wave(step: u64) -> f64 {
    (step as f64 * 0.37).sin() * 3.0 + step as f64 / 1000.0
}

#[test]
fn series_survive_restart_and_torn_tail() {
    let dir = tempfile::tempdir().unwrap();
    let tracker = Tracker::open(dir.path()).unwrap();
    let run = tracker.create_run("m", Map::new()).unwrap().run_id;
    for chunk in 0..10 {
        let report = tracker.ingest_events(&run, &support::metric_lines("loss", chunk * 1000, 1000, wave)).unwrap();
        assert_eq!(report.accepted, 1000);
    }
    let full = tracker.get_series(&run, "loss", usize::MAX).unwrap();
    let small = tracker.get_series(&run, "loss", 100).unwrap();
    assert_eq!(full.points.len(), 10_000);
    for (i, p) in full.points.iter().enumerate() {
        assert_eq!(p.step, i as u64);
        assert_eq!(p.value, wave(i as u64));
    }
    drop(tracker);

    let mut log = std::fs::OpenOptions::new().append(true).open(dir.path().join(&run).join(LOG_FILE)).unwrap();
    log.write_all(br#"{"type":"metric","step":10000,"na"#).unwrap();
    drop(log);

    let reopened = Tracker::open(dir.path()).unwrap();
    assert_eq!(reopened.get_series(&run, "loss", usize::MAX).unwrap(), full);
    assert_eq!(reopened.get_series(&run, "loss", 100).unwrap(), small);
    assert_eq!(reopened.run_detail(&run).unwrap().events, 10_001);
}

#[test]
fn synthetic_loss_starts_at_four_and_a_half() {
    let dir = tempfile::tempdir().unwrap();
    let tracker = Tracker::open(dir.path()).unwrap();
    assert_eq!(synth_loss(0), 4.5);
    let spec = SynthSpec { model: "m".into(), steps: 100, seed: 1, noise: 0.0, config: Map::new() };
    let run = tracker.synth_run(&spec).unwrap().run_id;
    let series = tracker.get_series(&run, "loss", usize::MAX).unwrap();
    assert_eq!(series.points.len(), 100);
    assert_eq!(series.points[0].value, 4.5);
    for p in &series.points {
        assert!((p.value - (4.0 * 0.99f64.powi(p.step as i32) + 0.5)).abs() < 1e-12);
    }
}

#[test]
fn subscriber_sees_a_burst_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let tracker = Arc::new(Tracker::open(dir.path()).unwrap());
    let run = tracker.create_run("m", Map::new()).unwrap().run_id;
    let mut sub = tracker.subscribe(&run).unwrap();
    let writer = {
        let (tracker, run) = (tracker.clone(), run.clone());
        std::thread::spawn(move || {
            for step in 0..1000 {
                tracker.ingest_events(&run, &support::metric_lines("loss", step, 1, wave)).unwrap();
            }
            tracker.ingest_events(&run, r#"{"type":"run_end","status":"completed"}"#).unwrap();
        })
    };
    let mut steps = Vec::new();
    let mut last = String::new();
    while let Some(line) = sub.blocking_recv() {
        let v: Value = serde_json::from_str(&line).unwrap();
        if let Some(step) = v["step"].as_u64() {
            steps.push(step);
        }
        last = v["type"].as_str().unwrap().to_string();
    }
    writer.join().unwrap();
    assert_eq!(steps, (0..1000).collect::<Vec<_>>());
    assert_eq!(last, "run_end");
}

#[test]
fn concurrent_runs_never_interleave() {
    let dir = tempfile::tempdir().unwrap();
    let tracker = Arc::new(Tracker::open(dir.path()).unwrap());
    let runs: Vec<String> = (0..4).map(|_| tracker.create_run("m", Map::new()).unwrap().run_id).collect();
    let handles: Vec<_> = runs
        .iter()
        .enumerate()
        .map(|(k, run)| {
            let (tracker, run) = (tracker.clone(), run.clone());
            std::thread::spawn(move || {
                for chunk in 0..50 {
                    let lines = support::metric_lines("loss", chunk * 10, 10, |s| (k * 100_000) as f64 + s as f64);
                    tracker.ingest_events(&run, &lines).unwrap();
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    for (k, run) in runs.iter().enumerate() {
        let log = std::fs::read_to_string(dir.path().join(run).join(LOG_FILE)).unwrap();
        let mut steps = Vec::new();
        for line in log.lines() {
            let v: Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["run"].as_str(), Some(run.as_str()));
            if let Some(step) = v["step"].as_u64() {
                assert_eq!(v["value"].as_f64(), Some((k * 100_000) as f64 + step as f64));
                steps.push(step);
            }
        }
        assert_eq!(steps, (0..500).collect::<Vec<_>>());
    }
}

proptest! {
    #[test]
    fn downsample_matches_bucket_means(len in 0usize..3000, n in 1usize..200, seed: u64) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Point> = (0..len as u64).map(|s| Point { step: s * 2, value: rng.gen_range(-10.0..10.0) }).collect();
        let got = downsample(&points, n);
        let want = support::bucket_oracle(&points, n);
        prop_assert_eq!(got.len(), want.len());
        for (g, (step, mean)) in got.iter().zip(&want) {
            prop_assert_eq!(g.step, *step);
            prop_assert!((g.value - mean).abs() <= 1e-12, "{} vs {}", g.value, mean);
        }
    }
}
