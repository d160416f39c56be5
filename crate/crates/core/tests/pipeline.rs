use ecalf::aperture::{random_schedule, ApertureSchedule, Constraints};
use ecalf::harness::{run_experiment, segment_stream, ExperimentConfig, TimingConfig};
use ecalf::lightfield::{load_lightfield, psnr, save_lightfield, synthetic_suite};
use ecalf::recon::{recon_from_measurement, ReconConfig};
use ecalf::sensor::{simulate_event_stream, EventStream, Measurement, SensorConfig};

#[test]
fn files_reproduce_the_in_memory_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let lf = synthetic_suite(3, 1, 32).unwrap().remove(0);
    let sched = random_schedule(3, Constraints::default(), 4, (8, 8)).unwrap();
    let sensor = SensorConfig::default();
    let (m, stream) =
        simulate_event_stream(&lf, &sched, &TimingConfig::default(), &sensor, 1).unwrap();

    m.save(dir.path().join("m.json")).unwrap();
    sched.save(dir.path().join("s.json")).unwrap();
    stream.write_csv(dir.path().join("e.csv")).unwrap();
    save_lightfield(dir.path().join("truth"), &lf).unwrap();

    let m2 = Measurement::load(dir.path().join("m.json")).unwrap();
    let s2 = ApertureSchedule::load(dir.path().join("s.json")).unwrap();
    let e2 = EventStream::read_csv(dir.path().join("e.csv"), 32, 32).unwrap();
    assert_eq!(m, m2);
    assert_eq!(e2.events, stream.events);

    let cfg = ReconConfig::default();
    let (a, _) = recon_from_measurement(&m, &sched, sensor.tau, sensor.epsilon, &cfg).unwrap();
    let (b, _) = recon_from_measurement(&m2, &s2, sensor.tau, sensor.epsilon, &cfg).unwrap();
    assert_eq!(a.field, b.field);
    let truth = load_lightfield(dir.path().join("truth")).unwrap();
    assert!(psnr(&truth, &b.field).unwrap() > 15.0);
}

#[test]
fn segmented_stream_feeds_reconstruction() {
    let lf = synthetic_suite(5, 1, 32).unwrap().remove(0);
    let sched = random_schedule(5, Constraints::default(), 4, (8, 8)).unwrap();
    let sensor = SensorConfig::default().with_tau(0.05);
    let timing = TimingConfig::default();
    let (m, stream) = simulate_event_stream(&lf, &sched, &timing, &sensor, 2).unwrap();
    let seg = segment_stream(&stream, &timing).unwrap();
    let rebuilt = Measurement {
        stacks: seg.cycles[1].stacks.clone(),
        ..m.clone()
    };
    assert_eq!(rebuilt, m);
}

#[test]
fn experiment_from_json_config() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        r#"{{
            "scenes": [{{"kind": "suite", "count": 2, "size": 24, "seed": 1}}],
            "schedule": {{"kind": "random", "seed": 2}},
            "taus": [0.1, 0.2],
            "output_dir": {:?},
            "write_images": true
        }}"#,
        dir.path()
    );
    let cfg = ExperimentConfig::from_json(&text).unwrap();
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert_eq!(report.failures, 0);
    for name in ["report.json", "report.csv"] {
        assert!(dir.path().join(name).is_file());
    }
    assert!(
        std::fs::read_dir(dir.path().join("images"))
            .unwrap()
            .count()
            > 0
    );
}
