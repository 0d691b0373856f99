//! Stereo obstacle detection and stop-decision quality evaluation.

// `!(x > 0.0)` is how NaN gets rejected along with the bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod detector;
pub mod error;
pub mod evaluator;
pub mod geometry;
pub mod image;
pub mod io;
pub mod params;
pub mod report;
pub mod stereo;
pub mod sweep;
pub mod synth;

pub use error::{Error, Result};
pub use evaluator::{Rate, StopVerdict, Summary};
pub use geometry::{CameraRig, Rect, VehiclePoint};
pub use params::{DepthSource, PipelineParams};
