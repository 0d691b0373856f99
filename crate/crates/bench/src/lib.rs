//! Fixtures shared by the benchmarks.

use roadstop_core::detector::DetectedObstacle;
use roadstop_core::evaluator::{DrivingCorridor, FrameAnnotation, IndifferenceZone, MarkedObstacle};
use roadstop_core::synth::{RandomSuite, SceneSpec};
use roadstop_core::Rect;

/// A cluttered scene: three boxes, one of them in the corridor.
pub fn scene(seed: u64) -> SceneSpec {
    RandomSuite {
        frames: 1,
        seed,
        max_boxes: 3,
        clear_fraction: 0.0,
        ..RandomSuite::default()
    }
    .build()
    .expect("valid recipe")
    .remove(0)
    .scene
}

/// A frame with `n` marked and `n` detected obstacles laid out on a grid,
/// plus one indifference zone.
pub fn busy_frame(n: usize) -> (FrameAnnotation, Vec<DetectedObstacle>) {
    let rect = |i: usize, shift: f64| {
        let u = (i % 16) as f64 * 40.0 + shift;
        let v = (i / 16) as f64 * 30.0 + shift;
        Rect::new(u, v, u + 50.0, v + 40.0).expect("ordered corners")
    };
    let marked = (0..n)
        .map(|i| MarkedObstacle::new(rect(i, 0.0), 3.0 + (i % 7) as f64).expect("positive range"))
        .collect();
    let dets = (0..n)
        .map(|i| DetectedObstacle {
            z_exp: 3.2 + (i % 5) as f64,
            x_span: [-1.0 + (i % 4) as f64, (i % 4) as f64],
            y_span: [0.0, 1.5],
            footprint: Vec::new(),
            area_cells: 8,
            rect: rect(i, 12.0),
        })
        .collect();
    let zone = IndifferenceZone::new(vec![(100.0, 100.0), (300.0, 120.0), (200.0, 260.0)]).expect("simple polygon");
    let ann = FrameAnnotation {
        frame_id: "bench".into(),
        marked,
        indifference: vec![zone],
        corridor: DrivingCorridor::default(),
    };
    (ann, dets)
}
