//! Detector and matcher checked against rendered scenes whose geometry is
//! known in closed form.

use roadstop_core::detector::{build_occupancy, cut_road_plane, depth_to_points, detect, DetectorParams};
use roadstop_core::evaluator::{evaluate_frame, DrivingCorridor, MatchConfig, ObstacleLabel};
use roadstop_core::geometry::{backproject, backproject_level, project};
use roadstop_core::stereo::{disparity_to_depth, match_block, texture_measure, StereoParams};
use roadstop_core::synth::{annotate, corrupt, render, render_depth, render_stereo_pair, BoxSpec, NoiseSpec, RandomSuite, SceneSpec};
use roadstop_core::{CameraRig, VehiclePoint};

fn rig() -> CameraRig {
    CameraRig::reference_scaled(2)
}

fn scene(boxes: Vec<BoxSpec>) -> SceneSpec {
    SceneSpec {
        boxes,
        ..SceneSpec::default()
    }
}

fn level_params() -> DetectorParams {
    DetectorParams {
        tilt_allowance_deg: 0.0,
        ..DetectorParams::default()
    }
}

#[test]
fn box_front_occupies_one_strip_of_cells() {
    // front at z = 5.05 (middle of row 50), x from 0 to 1, 4 cm deep
    let b = BoxSpec {
        center_x: 0.5,
        center_z: 5.07,
        width: 1.0,
        depth: 0.04,
        height: 1.5,
    };
    let rig = rig();
    let params = level_params();
    let points = depth_to_points(&render_depth(&scene(vec![b]), &rig), &rig);
    let occ = build_occupancy(&cut_road_plane(&points, &params), &params);
    let mut cells = Vec::new();
    for r in 0..occ.rows {
        for c in 0..occ.cols {
            if occ.occupied.get(c, r) {
                cells.push((c, r));
            }
        }
    }
    let n = (1.0 / params.cell_size_m).ceil() as usize;
    let row = (5.05 / params.cell_size_m).floor() as usize;
    let first = occ.cell_of(0.0 + 1e-9, 5.05).unwrap().0;
    let expect: Vec<(usize, usize)> = (first..first + n).map(|c| (c, row)).collect();
    assert_eq!(cells, expect);
}

#[test]
fn two_boxes_two_obstacles_at_their_ranges() {
    let boxes = vec![
        BoxSpec {
            center_x: -1.2,
            center_z: 4.4,
            width: 1.0,
            depth: 0.8,
            height: 1.5,
        },
        BoxSpec {
            center_x: 1.5,
            center_z: 9.4,
            width: 1.2,
            depth: 0.8,
            height: 1.5,
        },
    ];
    let rig = rig();
    let params = level_params();
    let found = detect(&render_depth(&scene(boxes), &rig), &rig, &params).unwrap();
    assert_eq!(found.len(), 2, "{found:?}");
    assert!((found[0].z_exp - 4.0).abs() <= params.cell_size_m, "{}", found[0].z_exp);
    assert!((found[1].z_exp - 9.0).abs() <= params.cell_size_m, "{}", found[1].z_exp);
}

fn pedestrian() -> SceneSpec {
    scene(vec![BoxSpec {
        center_x: 0.0,
        center_z: 5.15,
        width: 0.6,
        depth: 0.3,
        height: 1.7,
    }])
}

#[test]
fn pedestrian_is_one_obstacle_with_and_without_dropout() {
    let rig = rig();
    let params = DetectorParams::default();
    let rendered = render(&pedestrian(), &rig);
    let clean = detect(&rendered.depth, &rig, &params).unwrap();
    assert_eq!(clean.len(), 1);
    assert!((clean[0].z_exp - 5.0).abs() <= 2.0 * params.cell_size_m);

    for seed in 0..5 {
        let holes = corrupt(
            &rendered,
            &NoiseSpec {
                dropout_prob: 0.3,
                seed,
                ..NoiseSpec::default()
            },
        );
        let found = detect(&holes, &rig, &params).unwrap();
        assert_eq!(found.len(), 1, "seed {seed}: {found:?}");
    }
}

#[test]
fn clean_scenes_detect_every_marked_box() {
    let rig = rig();
    let params = DetectorParams {
        cutoff_height_m: 0.15,
        ..level_params()
    };
    let corridor = DrivingCorridor::default();
    let suite = RandomSuite {
        frames: 12,
        seed: 11,
        clear_fraction: 0.0,
        ..RandomSuite::default()
    }
    .build()
    .unwrap();
    let mut marked = 0;
    for e in &suite {
        let ann = annotate(&e.scene, &rig, &corridor);
        let dets = detect(&render_depth(&e.scene, &rig), &rig, &params).unwrap();
        let r = evaluate_frame(&ann, &dets, &MatchConfig::default(), &rig);
        for m in &r.labels.marked {
            marked += 1;
            assert_eq!(m.label, ObstacleLabel::TruePositive, "{:?}", e.scene);
        }
    }
    assert!(marked >= 12);
}

#[test]
fn marked_rectangle_backprojects_onto_the_front_face() {
    let rig = rig();
    let suite = RandomSuite {
        frames: 20,
        seed: 4,
        ..RandomSuite::default()
    }
    .build()
    .unwrap();
    for e in &suite {
        let ann = annotate(&e.scene, &rig, &DrivingCorridor::default());
        for m in &ann.marked {
            let b = e
                .scene
                .boxes
                .iter()
                .find(|b| (b.front_z() - m.z_ref_m).abs() < 1e-12)
                .unwrap();
            // one pixel at the box range, in meters
            let px = m.z_ref_m / rig.focal_px();
            let tl = backproject_level(&rig, (m.rect_px.u0, m.rect_px.v0), m.z_ref_m).unwrap();
            let br = backproject_level(&rig, (m.rect_px.u1, m.rect_px.v1), m.z_ref_m).unwrap();
            let [x0, x1] = b.x_range();
            assert!((tl.x - x0).abs() <= px && (br.x - x1).abs() <= px);
            assert!((tl.y - b.height).abs() <= px && br.y.abs() <= px);
        }
    }
}

#[test]
fn stereo_depth_reproduces_surface_points() {
    let rig = rig();
    let s = pedestrian();
    let pair = render_stereo_pair(&s, &rig);
    let params = StereoParams {
        max_disparity: 128,
        ..StereoParams::default()
    };
    let disp = match_block(&pair.left, &pair.right, &params).unwrap();
    let tex = texture_measure(&pair.left, params.block_size);

    let mut errs = Vec::new();
    for (i, t) in tex.iter().enumerate() {
        let (u, v) = (i % rig.width(), i / rig.width());
        let (Some(d), Some(dt)) = (disp.get(u, v), pair.true_disparity.get(u, v)) else { continue };
        if pair.non_occluded[i] && t.is_some_and(|t| t >= params.texture_threshold) {
            errs.push((d - dt).abs());
        }
    }
    errs.sort_by(f64::total_cmp);
    assert!(errs.len() > 10_000);
    assert!(errs[errs.len() / 2] <= 1.0, "median {}", errs[errs.len() / 2]);

    // depth from the true disparity lands on the surface within one
    // disparity step
    let depth = disparity_to_depth(&pair.true_disparity, &rig, 100.0);
    let truth = render_depth(&s, &rig);
    let fb = rig.focal_px() * rig.baseline_m();
    for v in (0..rig.height()).step_by(7) {
        for u in (0..rig.width()).step_by(7) {
            let (Some(z), Some(zt)) = (depth.get(u, v), truth.get(u, v)) else { continue };
            let p = backproject(&rig, (u as f64, v as f64), z).unwrap();
            let q = backproject(&rig, (u as f64, v as f64), zt).unwrap();
            let d = fb / zt;
            let step = fb / (d - 1.0).max(0.5) - zt;
            let dist = ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt();
            assert!(dist <= step.abs() * 2.0, "({u}, {v}) off by {dist} m");
        }
    }
}

#[test]
fn vertical_edges_are_vertical_after_level_rectification() {
    let rig = rig();
    let b = pedestrian().boxes[0];
    let [x0, _] = b.x_range();
    let us: Vec<f64> = (0..=10)
        .map(|k| {
            let p = VehiclePoint::new(x0, b.height * k as f64 / 10.0, b.front_z());
            // tilted image position, then to the level image
            let (u, v, _) = project(&rig, p).unwrap();
            roadstop_core::geometry::rectify_to_level(&rig, (u, v)).unwrap().0
        })
        .collect();
    for u in &us {
        assert!((u - us[0]).abs() < 1e-9, "{us:?}");
    }
}
