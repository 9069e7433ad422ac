use graybox_core::harness::*;

#[test]
fn presets_round_trip_through_toml() {
    for scenario in [Scenario::Static, Scenario::TimeVarying] {
        let cfg = ExperimentConfig::preset(scenario);
        let text = cfg.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back.to_toml_string().unwrap(), text);
        assert_eq!(back.controllers.len(), 5);
    }
}

#[test]
fn unknown_controller_selection_is_rejected() {
    let mut cfg = ExperimentConfig::static_benchmark();
    assert!(cfg.select_controllers(&["no-such-controller".into()]).is_err());
    cfg.select_controllers(&["gray-box".into()]).unwrap();
    assert_eq!(cfg.controllers.len(), 1);
}

#[test]
fn results_are_written_and_reproducible() {
    let mut cfg = ExperimentConfig::tv_benchmark();
    cfg.horizon = 400;
    cfg.replicates = 2;
    cfg.csv_stride = 50;
    cfg.schedule.period = 150;
    let dir = tempfile::tempdir().unwrap();
    let first = run_experiment(&cfg).unwrap();
    let (csv, summary) = write_results(&first, &cfg, dir.path()).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with(CSV_HEADER));
    // 5 controllers x 2 replicates x (8 strided steps + the last) x 4 measures.
    assert_eq!(text.lines().count(), 1 + 5 * 2 * 9 * 4);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(summary).unwrap()).unwrap();
    assert_eq!(json["controllers"].as_array().unwrap().len(), 5);

    let second = run_experiment(&cfg).unwrap();
    assert_eq!(render_csv(&second, cfg.csv_stride).unwrap(), text);
}
