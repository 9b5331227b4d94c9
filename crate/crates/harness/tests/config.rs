use spai_harness::ExperimentConfig;

#[test]
fn partial_tables_keep_the_remaining_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, "[world]\nseed = 3\n\n[identification]\ntolerance = 0.5\n").unwrap();
    let cfg = ExperimentConfig::load(Some(&path)).unwrap();
    let default = ExperimentConfig::default();
    assert_eq!(cfg.world.seed, 3);
    assert_eq!(cfg.world.objects, default.world.objects);
    assert_eq!(cfg.identification.tolerance, 0.5);
    assert_eq!(cfg.identification.nominal_per_skill, 40);
    assert_eq!(cfg.classification, default.classification);
}

#[test]
fn missing_file_means_defaults() {
    assert_eq!(ExperimentConfig::load(None).unwrap(), ExperimentConfig::default());
}

#[test]
fn negative_tolerance_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.toml");
    std::fs::write(&path, "[identification]\ntolerance = -1.0\n").unwrap();
    assert!(ExperimentConfig::load(Some(&path)).is_err());
}
