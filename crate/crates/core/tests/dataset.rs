use std::fs::File;

use beamho::config::ExperimentConfig;
use beamho::dataset::read_rows;
use beamho::features::{make_supervised, FeatureSet, PipelineSpec, RawFrame};
use beamho::runner::{export_dataset, simulate};

#[test]
fn reimported_export_gives_identical_supervised_frames() {
    let mut cfg = ExperimentConfig::desk();
    cfg.scenario.num_ues = 3;
    cfg.scenario.frames = 120;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rows.csv");
    assert_eq!(export_dataset(&cfg, &path).unwrap(), 360);

    let original = simulate(&cfg).unwrap().all_rows();
    let back = read_rows(File::open(&path).unwrap()).unwrap();
    assert_eq!(back, original);

    for crnti in 1..=3 {
        let ue = |rows: &[beamho::radio::MeasurementRow]| {
            RawFrame::new(rows.iter().filter(|r| r.crnti == crnti).copied().collect()).unwrap()
        };
        for fs in [FeatureSet::WithCoords, FeatureSet::Centralized] {
            let spec = PipelineSpec::causal(3, fs);
            let a = make_supervised(&ue(&original), spec, 0.6, 10).unwrap();
            let b = make_supervised(&ue(&back), spec, 0.6, 10).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn export_to_missing_directory_is_an_io_error() {
    let mut cfg = ExperimentConfig::desk();
    cfg.scenario.num_ues = 1;
    cfg.scenario.frames = 20;
    let err = export_dataset(&cfg, std::path::Path::new("/nonexistent/dir/rows.csv")).unwrap_err();
    assert!(matches!(err, beamho::Error::Io(_)));
}
