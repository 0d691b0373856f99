use std::path::Path;

use roadstop_core::dataset::{evaluate_dataset, generate_from_suite, Dataset, SuiteDocument};
use roadstop_core::params::ParamValue;
use roadstop_core::sweep::{run_sweep, ParameterGrid, SweepOptions};
use roadstop_core::synth::RandomSuite;
use roadstop_core::{CameraRig, PipelineParams};

fn dataset(dir: &Path) -> Dataset {
    let doc = SuiteDocument {
        random: Some(RandomSuite {
            frames: 10,
            seed: 21,
            ..RandomSuite::default()
        }),
        images: true,
        ..SuiteDocument::default()
    };
    generate_from_suite(&doc, &CameraRig::reference_scaled(4), dir).unwrap();
    Dataset::load(dir, None).unwrap()
}

fn base() -> PipelineParams {
    PipelineParams::default().with_override("max_disparity=64").unwrap()
}

fn axis(k: &str, vs: &[f64]) -> (String, Vec<ParamValue>) {
    (k.to_string(), vs.iter().map(|&v| ParamValue::Float(v)).collect())
}

#[test]
fn sweep_results_do_not_depend_on_axis_order_or_caching() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path());
    let a = ParameterGrid::new(vec![
        axis("stereo.block_size", &[7.0, 9.0]),
        axis("detector.cutoff_height_m", &[0.15, 0.3]),
        axis("detector.tilt_allowance_deg", &[0.0, 10.0]),
    ])
    .unwrap();
    let b = ParameterGrid::new(vec![
        axis("detector.tilt_allowance_deg", &[10.0, 0.0]),
        axis("stereo.block_size", &[9.0, 7.0]),
        axis("detector.cutoff_height_m", &[0.3, 0.15]),
    ])
    .unwrap();

    let cached = run_sweep(&ds, &a, &base(), SweepOptions { cache_depth: true }).unwrap();
    let uncached = run_sweep(&ds, &a, &base(), SweepOptions { cache_depth: false }).unwrap();
    let reordered = run_sweep(&ds, &b, &base(), SweepOptions::default()).unwrap();
    assert_eq!(cached.len(), 8);

    for (x, y) in cached.iter().zip(&uncached) {
        assert_eq!(x.params, y.params);
        assert_eq!(x.summary, y.summary);
    }
    let mut by_params: Vec<_> = reordered.iter().map(|p| (p.params.flatten(), p.summary)).collect();
    let mut expect: Vec<_> = cached.iter().map(|p| (p.params.flatten(), p.summary)).collect();
    let key = |x: &(Vec<(String, ParamValue)>, _)| format!("{:?}", x.0);
    by_params.sort_by_key(key);
    expect.sort_by_key(key);
    assert_eq!(by_params, expect);
}

#[test]
fn single_point_sweep_equals_evaluation() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path());
    let grid = ParameterGrid::new(vec![axis("detector.cutoff_height_m", &[0.2])]).unwrap();
    let points = run_sweep(&ds, &grid, &base(), SweepOptions::default()).unwrap();
    let direct = evaluate_dataset(&ds, &base().with_override("cutoff_height_m=0.2").unwrap(), None).unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(points[0].summary, direct.summary);
}

#[test]
fn invalid_grid_point_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset(tmp.path());
    let grid = ParameterGrid::new(vec![axis("stereo.block_size", &[4.0])]).unwrap();
    let err = run_sweep(&ds, &grid, &base(), SweepOptions::default()).unwrap_err();
    assert!(matches!(err, roadstop_core::Error::Config(_)), "{err}");
}
