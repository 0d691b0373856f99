//! Pinhole stereo rig, vehicle-frame conventions and level rectification.
//!
//! Frames used throughout the crate:
//!
//! * **camera frame** (left camera): `x` right, `y` down, `z` along the
//!   optical axis. Pixel `(u, v)` with integer coordinates is the center of
//!   the pixel in column `u`, row `v`.
//! * **vehicle frame**: origin on the ground directly below the left optical
//!   center, `x` right, `y` up (height above the road plane), `z` forward.
//! * **level camera**: a virtual camera at the same center and with the same
//!   intrinsics but zero pitch. Annotation rectangles live in its image.
//!
//! Only pitch is modeled; roll and yaw are zero and both stereo cameras
//! share intrinsics (rectified pair, horizontal epipolar lines).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Horizontal focal length in pixels for a given image width and field of view.
pub fn focal_from_fov(image_width: usize, horizontal_fov_deg: f64) -> Result<f64> {
    if image_width == 0 {
        return Err(Error::invalid("image width must be positive"));
    }
    if !(horizontal_fov_deg > 0.0 && horizontal_fov_deg < 180.0) {
        return Err(Error::invalid(format!(
            "field of view {horizontal_fov_deg} deg outside (0, 180)"
        )));
    }
    let half = (horizontal_fov_deg / 2.0).to_radians();
    Ok(image_width as f64 / 2.0 / half.tan())
}

/// Calibrated stereo rig mounted on the vehicle.
///
/// The serialized form is the calibration file format; key names are fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigRecord", into = "RigRecord")]
pub struct CameraRig {
    focal_px: f64,
    principal_point: [f64; 2],
    image_size: [usize; 2],
    baseline_m: f64,
    mount_height_m: f64,
    pitch_deg: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigRecord {
    focal_px: f64,
    principal_point: [f64; 2],
    image_size: [usize; 2],
    baseline_m: f64,
    mount_height_m: f64,
    pitch_deg: f64,
}

impl TryFrom<RigRecord> for CameraRig {
    type Error = Error;

    fn try_from(r: RigRecord) -> Result<Self> {
        CameraRig::new(
            r.focal_px,
            r.principal_point,
            r.image_size,
            r.baseline_m,
            r.mount_height_m,
            r.pitch_deg,
        )
    }
}

impl From<CameraRig> for RigRecord {
    fn from(r: CameraRig) -> Self {
        RigRecord {
            focal_px: r.focal_px,
            principal_point: r.principal_point,
            image_size: r.image_size,
            baseline_m: r.baseline_m,
            mount_height_m: r.mount_height_m,
            pitch_deg: r.pitch_deg,
        }
    }
}

impl CameraRig {
    pub fn new(
        focal_px: f64,
        principal_point: [f64; 2],
        image_size: [usize; 2],
        baseline_m: f64,
        mount_height_m: f64,
        pitch_deg: f64,
    ) -> Result<Self> {
        let finite = [
            focal_px,
            principal_point[0],
            principal_point[1],
            baseline_m,
            mount_height_m,
            pitch_deg,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("rig parameters must be finite"));
        }
        if focal_px <= 0.0 {
            return Err(Error::invalid("focal_px must be positive"));
        }
        if baseline_m <= 0.0 {
            return Err(Error::invalid("baseline_m must be positive"));
        }
        if mount_height_m <= 0.0 {
            return Err(Error::invalid("mount_height_m must be positive"));
        }
        if !(0.0..90.0).contains(&pitch_deg) {
            return Err(Error::invalid("pitch_deg must lie in [0, 90)"));
        }
        let [w, h] = image_size;
        let [u0, v0] = principal_point;
        if w == 0 || h == 0 {
            return Err(Error::invalid("image_size must be positive"));
        }
        if !(u0 > 0.0 && u0 < w as f64 && v0 > 0.0 && v0 < h as f64) {
            return Err(Error::invalid(
                "principal_point must lie strictly inside the image",
            ));
        }
        Ok(CameraRig {
            focal_px,
            principal_point,
            image_size,
            baseline_m,
            mount_height_m,
            pitch_deg,
        })
    }

    /// The bus-mounted rig: 1280x1024, about 80 deg horizontal view angle,
    /// 0.75 m stereo base, optical center 2.2 m above ground, 20 deg down.
    pub fn reference() -> Self {
        Self::reference_scaled(1)
    }

    /// The reference rig with the image downsampled by an integer factor
    /// (same view angle, baseline and mounting).
    pub fn reference_scaled(factor: usize) -> Self {
        let factor = factor.max(1);
        let w = 1280 / factor;
        let h = 1024 / factor;
        let focal = focal_from_fov(w, 80.0).expect("constant fov is valid");
        CameraRig::new(
            focal,
            [w as f64 / 2.0, h as f64 / 2.0],
            [w, h],
            0.75,
            2.2,
            20.0,
        )
        .expect("reference rig is valid")
    }

    pub fn focal_px(&self) -> f64 {
        self.focal_px
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.principal_point[0], self.principal_point[1])
    }

    pub fn width(&self) -> usize {
        self.image_size[0]
    }

    pub fn height(&self) -> usize {
        self.image_size[1]
    }

    pub fn baseline_m(&self) -> f64 {
        self.baseline_m
    }

    pub fn mount_height_m(&self) -> f64 {
        self.mount_height_m
    }

    pub fn pitch_deg(&self) -> f64 {
        self.pitch_deg
    }

    /// Same rig with a different baseline; a zero baseline is allowed here
    /// for degenerate rendering only.
    pub fn with_baseline_unchecked(mut self, baseline_m: f64) -> Self {
        self.baseline_m = baseline_m;
        self
    }

    /// Same rig with a different pitch.
    pub fn with_pitch(self, pitch_deg: f64) -> Result<Self> {
        CameraRig::new(
            self.focal_px,
            self.principal_point,
            self.image_size,
            self.baseline_m,
            self.mount_height_m,
            pitch_deg,
        )
    }

    /// Same rig with a different mounting height.
    pub fn with_mount_height(self, mount_height_m: f64) -> Result<Self> {
        CameraRig::new(
            self.focal_px,
            self.principal_point,
            self.image_size,
            self.baseline_m,
            mount_height_m,
            self.pitch_deg,
        )
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.width() - 1) as f64 && v <= (self.height() - 1) as f64
    }

    pub(crate) fn pose(&self) -> Pose {
        let (sin, cos) = self.pitch_deg.to_radians().sin_cos();
        Pose {
            sin,
            cos,
            height: self.mount_height_m,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("rig serializes")
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json(origin, e))
    }
}

/// Rigid transform between the (tilted) camera frame and the vehicle frame.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Pose {
    sin: f64,
    cos: f64,
    height: f64,
}

impl Pose {
    /// Camera-frame coordinates to vehicle frame, camera center at `(cx, h, 0)`.
    #[inline]
    pub(crate) fn camera_to_vehicle(&self, xc: f64, yc: f64, zc: f64, cx: f64) -> VehiclePoint {
        VehiclePoint {
            x: xc + cx,
            y: self.height - self.cos * yc - self.sin * zc,
            z: -self.sin * yc + self.cos * zc,
        }
    }

    #[inline]
    pub(crate) fn vehicle_to_camera(&self, p: VehiclePoint, cx: f64) -> (f64, f64, f64) {
        let dx = p.x - cx;
        let dy = p.y - self.height;
        let dz = p.z;
        (dx, -self.cos * dy - self.sin * dz, -self.sin * dy + self.cos * dz)
    }

    /// Tilted-camera direction to level-camera direction (level `y` down).
    #[inline]
    pub(crate) fn tilted_to_level(&self, yc: f64, zc: f64) -> (f64, f64) {
        (self.cos * yc + self.sin * zc, -self.sin * yc + self.cos * zc)
    }

    #[inline]
    pub(crate) fn level_to_tilted(&self, yl: f64, zl: f64) -> (f64, f64) {
        (self.cos * yl - self.sin * zl, self.sin * yl + self.cos * zl)
    }
}

/// A point in the vehicle frame, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehiclePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl VehiclePoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        VehiclePoint { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Back-projects a left-image pixel at a given camera-frame depth.
pub fn backproject(rig: &CameraRig, pixel: (f64, f64), depth_m: f64) -> Result<VehiclePoint> {
    if !(depth_m > 0.0) || !depth_m.is_finite() {
        return Err(Error::invalid(format!("depth must be positive, got {depth_m}")));
    }
    if !rig.contains(pixel.0, pixel.1) {
        return Err(Error::invalid(format!(
            "pixel ({}, {}) outside the image",
            pixel.0, pixel.1
        )));
    }
    Ok(backproject_unchecked(rig, &rig.pose(), pixel, depth_m))
}

#[inline]
pub(crate) fn backproject_unchecked(
    rig: &CameraRig,
    pose: &Pose,
    (u, v): (f64, f64),
    depth_m: f64,
) -> VehiclePoint {
    let (u0, v0) = rig.principal_point();
    let f = rig.focal_px;
    let xc = (u - u0) / f * depth_m;
    let yc = (v - v0) / f * depth_m;
    pose.camera_to_vehicle(xc, yc, depth_m, 0.0)
}

/// Projects a vehicle-frame point into the left image. The pixel may fall
/// outside the image; the returned depth is the camera-frame depth.
pub fn project(rig: &CameraRig, point: VehiclePoint) -> Result<(f64, f64, f64)> {
    project_from(rig, point, 0.0)
}

/// Projects into the right camera of the pair (offset by the baseline
/// along the vehicle `x` axis).
pub fn project_right(rig: &CameraRig, point: VehiclePoint) -> Result<(f64, f64, f64)> {
    project_from(rig, point, rig.baseline_m)
}

fn project_from(rig: &CameraRig, point: VehiclePoint, cx: f64) -> Result<(f64, f64, f64)> {
    let (xc, yc, zc) = rig.pose().vehicle_to_camera(point, cx);
    if !(zc > 0.0) {
        return Err(Error::BehindCamera(zc));
    }
    let (u0, v0) = rig.principal_point();
    let f = rig.focal_px;
    Ok((u0 + f * xc / zc, v0 + f * yc / zc, zc))
}

/// Camera-frame depth at which the ray through `pixel` meets the ground
/// plane, or `None` when the ray points at or above the horizon.
pub fn ground_depth(rig: &CameraRig, pixel: (f64, f64)) -> Option<f64> {
    let pose = rig.pose();
    let (_, v0) = rig.principal_point();
    // height along the ray: y = h - zc * (sin + cos * (v - v0) / f)
    let slope = pose.sin + pose.cos * (pixel.1 - v0) / rig.focal_px;
    (slope > 0.0).then(|| rig.mount_height_m / slope)
}

/// Maps a left-image pixel to the zero-pitch virtual camera image.
pub fn rectify_to_level(rig: &CameraRig, (u, v): (f64, f64)) -> Result<(f64, f64)> {
    let pose = rig.pose();
    let (u0, v0) = rig.principal_point();
    let f = rig.focal_px;
    let (yl, zl) = pose.tilted_to_level((v - v0) / f, 1.0);
    if !(zl > 0.0) {
        return Err(Error::UnrepresentablePixel(u, v));
    }
    Ok((u0 + (u - u0) / zl, v0 + f * yl / zl))
}

/// Inverse of [`rectify_to_level`].
pub fn unrectify_from_level(rig: &CameraRig, (u, v): (f64, f64)) -> Result<(f64, f64)> {
    let pose = rig.pose();
    let (u0, v0) = rig.principal_point();
    let f = rig.focal_px;
    let (yc, zc) = pose.level_to_tilted((v - v0) / f, 1.0);
    if !(zc > 0.0) {
        return Err(Error::UnrepresentablePixel(u, v));
    }
    Ok((u0 + (u - u0) / zc, v0 + f * yc / zc))
}

/// Homography `K R K^-1` taking homogeneous left-image pixels to level pixels.
pub fn level_homography(rig: &CameraRig) -> [[f64; 3]; 3] {
    let Pose { sin, cos, .. } = rig.pose();
    let f = rig.focal_px;
    let (u0, v0) = rig.principal_point();
    let k = [[f, 0.0, u0], [0.0, f, v0], [0.0, 0.0, 1.0]];
    let k_inv = [
        [1.0 / f, 0.0, -u0 / f],
        [0.0, 1.0 / f, -v0 / f],
        [0.0, 0.0, 1.0],
    ];
    let r = [[1.0, 0.0, 0.0], [0.0, cos, sin], [0.0, -sin, cos]];
    mat_mul(&mat_mul(&k, &r), &k_inv)
}

pub(crate) fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            *cell = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn determinant(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Projects a vehicle-frame point into the level camera image.
pub fn project_level(rig: &CameraRig, p: VehiclePoint) -> Result<(f64, f64)> {
    if !(p.z > 0.0) {
        return Err(Error::BehindCamera(p.z));
    }
    let (u0, v0) = rig.principal_point();
    let f = rig.focal_px;
    Ok((u0 + f * p.x / p.z, v0 + f * (rig.mount_height_m - p.y) / p.z))
}

/// Vehicle-frame point seen at a level-image pixel at forward range `z`.
pub fn backproject_level(rig: &CameraRig, (u, v): (f64, f64), z: f64) -> Result<VehiclePoint> {
    if !(z > 0.0) {
        return Err(Error::invalid(format!("range must be positive, got {z}")));
    }
    let (u0, v0) = rig.principal_point();
    let f = rig.focal_px;
    Ok(VehiclePoint {
        x: (u - u0) * z / f,
        y: rig.mount_height_m - (v - v0) * z / f,
        z,
    })
}

/// Axis-aligned image rectangle, pixels, `u0 < u1` and `v0 < v1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub u0: f64,
    pub v0: f64,
    pub u1: f64,
    pub v1: f64,
}

impl Rect {
    pub fn new(u0: f64, v0: f64, u1: f64, v1: f64) -> Result<Self> {
        if ![u0, v0, u1, v1].iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("rectangle corners must be finite"));
        }
        if !(u0 < u1 && v0 < v1) {
            return Err(Error::invalid(format!(
                "degenerate rectangle [{u0}, {v0}, {u1}, {v1}]"
            )));
        }
        Ok(Rect { u0, v0, u1, v1 })
    }

    /// Closed-set intersection test.
    pub fn intersects(&self, other: &Rect) -> bool {
        self.u0 <= other.u1 && other.u0 <= self.u1 && self.v0 <= other.v1 && other.v0 <= self.v1
    }

    pub fn contains(&self, (u, v): (f64, f64)) -> bool {
        u >= self.u0 && u <= self.u1 && v >= self.v0 && v <= self.v1
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.u0, self.v0),
            (self.u1, self.v0),
            (self.u1, self.v1),
            (self.u0, self.v1),
        ]
    }
}

impl TryFrom<[f64; 4]> for Rect {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self> {
        Rect::new(c[0], c[1], c[2], c[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.u0, r.v0, r.u1, r.v1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rig_with_pitch(pitch: f64) -> CameraRig {
        CameraRig::reference().with_pitch(pitch).unwrap()
    }

    #[test]
    fn focal_from_reference_fov() {
        // 640 / tan(40 deg), evaluated independently in f64
        assert_abs_diff_eq!(focal_from_fov(1280, 80.0).unwrap(), 762.722_299_260_294_4, epsilon = 1e-9);
        assert_abs_diff_eq!(focal_from_fov(1280, 90.0).unwrap(), 640.0, epsilon = 1e-9);
        assert!(focal_from_fov(1280, 0.0).is_err());
        assert!(focal_from_fov(1280, 180.0).is_err());
        assert!(focal_from_fov(0, 60.0).is_err());
    }

    #[test]
    fn rig_invariants_enforced() {
        let ok = CameraRig::reference();
        assert!(CameraRig::new(0.0, [640.0, 512.0], [1280, 1024], 0.75, 2.2, 20.0).is_err());
        assert!(CameraRig::new(700.0, [640.0, 512.0], [1280, 1024], 0.0, 2.2, 20.0).is_err());
        assert!(CameraRig::new(700.0, [640.0, 512.0], [1280, 1024], 0.75, -1.0, 20.0).is_err());
        assert!(CameraRig::new(700.0, [640.0, 512.0], [1280, 1024], 0.75, 2.2, 90.0).is_err());
        assert!(CameraRig::new(700.0, [1280.0, 512.0], [1280, 1024], 0.75, 2.2, 20.0).is_err());
        assert_eq!(ok.width(), 1280);
    }

    #[test]
    fn calibration_json_keys_are_fixed() {
        let rig = CameraRig::reference();
        let json: serde_json::Value = serde_json::from_str(&rig.to_json_string()).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["baseline_m", "focal_px", "image_size", "mount_height_m", "pitch_deg", "principal_point"]
        );
        let back = CameraRig::from_json_str(&rig.to_json_string(), "calib.json").unwrap();
        assert_eq!(back, rig);
        let bad = r#"{"focal_px": -1, "principal_point": [1,1], "image_size": [4,4],
                      "baseline_m": 1, "mount_height_m": 1, "pitch_deg": 0}"#;
        assert!(CameraRig::from_json_str(bad, "x").is_err());
    }

    #[test]
    fn backproject_principal_point() {
        let level = rig_with_pitch(0.0);
        let (u0, v0) = level.principal_point();
        let p = backproject(&level, (u0, v0), 5.0).unwrap();
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 2.2, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 5.0, epsilon = 1e-12);

        let tilted = rig_with_pitch(20.0);
        let p = backproject(&tilted, (u0, v0), 5.0).unwrap();
        // hand-evaluated: 2.2 - 5 sin 20, 5 cos 20
        assert_abs_diff_eq!(p.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.489_899_283_371_656_7, epsilon = 1e-12);
        assert_abs_diff_eq!(p.z, 4.698_463_103_929_543, epsilon = 1e-12);
        let (u, v, d) = project(&tilted, p).unwrap();
        assert_abs_diff_eq!(u, u0, epsilon = 1e-9);
        assert_abs_diff_eq!(v, v0, epsilon = 1e-9);
        assert_abs_diff_eq!(d, 5.0, epsilon = 1e-12);
    }

    #[test]
    fn backproject_rejects_bad_input() {
        let rig = CameraRig::reference();
        assert!(backproject(&rig, (10.0, 10.0), 0.0).is_err());
        assert!(backproject(&rig, (10.0, 10.0), -2.0).is_err());
        assert!(backproject(&rig, (-1.0, 10.0), 2.0).is_err());
    }

    #[test]
    fn ground_below_camera_is_not_visible() {
        let below = VehiclePoint::new(0.0, 0.0, 0.0);
        // level camera: the foot point lies in the camera plane
        assert!(matches!(project(&rig_with_pitch(0.0), below), Err(Error::BehindCamera(_))));
        // 20 deg pitch: in front, but v0 + f*cot(20 deg) is far below the image
        let rig = CameraRig::reference();
        let (u, v, d) = project(&rig, below).unwrap();
        assert!(d > 0.0);
        assert!(!rig.contains(u, v));
        assert!(v > rig.height() as f64);
    }

    #[test]
    fn level_point_ahead_appears_above_principal_point() {
        let rig = CameraRig::reference();
        let (_, v, _) = project(&rig, VehiclePoint::new(0.0, 2.2, 10.0)).unwrap();
        assert!(v < rig.principal_point().1);
    }

    #[test]
    fn rectification_identity_without_pitch() {
        let rig = rig_with_pitch(0.0);
        for &(u, v) in &[(0.0, 0.0), (640.0, 512.0), (1279.0, 1023.0), (17.5, 900.25)] {
            let (a, b) = rectify_to_level(&rig, (u, v)).unwrap();
            assert_abs_diff_eq!(a, u, epsilon = 1e-12);
            assert_abs_diff_eq!(b, v, epsilon = 1e-12);
        }
    }

    #[test]
    fn rectification_matches_homography() {
        let rig = CameraRig::reference();
        let h = level_homography(&rig);
        assert!(determinant(&h).abs() > 1e-12);
        let (u, v) = (123.0, 876.0);
        let x = [u, v, 1.0];
        let y: Vec<f64> = (0..3).map(|i| (0..3).map(|k| h[i][k] * x[k]).sum()).collect();
        let (a, b) = rectify_to_level(&rig, (u, v)).unwrap();
        assert_abs_diff_eq!(a, y[0] / y[2], epsilon = 1e-9);
        assert_abs_diff_eq!(b, y[1] / y[2], epsilon = 1e-9);
    }

    #[test]
    fn level_projection_agrees_with_rectified_projection() {
        let rig = CameraRig::reference();
        let p = VehiclePoint::new(0.7, 1.1, 6.0);
        let (u, v, _) = project(&rig, p).unwrap();
        let rect = rectify_to_level(&rig, (u, v)).unwrap();
        let direct = project_level(&rig, p).unwrap();
        assert_abs_diff_eq!(rect.0, direct.0, epsilon = 1e-9);
        assert_abs_diff_eq!(rect.1, direct.1, epsilon = 1e-9);
        let back = backproject_level(&rig, direct, 6.0).unwrap();
        assert_abs_diff_eq!(back.x, p.x, epsilon = 1e-12);
        assert_abs_diff_eq!(back.y, p.y, epsilon = 1e-12);
    }

    #[test]
    fn unrepresentable_pixel_reported() {
        // at 80 deg pitch the bottom rows look behind the level image plane
        let rig = CameraRig::reference().with_pitch(80.0).unwrap();
        assert!(matches!(
            rectify_to_level(&rig, (640.0, 1023.0)),
            Err(Error::UnrepresentablePixel(..))
        ));
    }

    #[test]
    fn rect_intersection() {
        let a = Rect::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert!(a.intersects(&Rect::new(5.0, 5.0, 15.0, 15.0).unwrap()));
        assert!(a.intersects(&Rect::new(10.0, 0.0, 15.0, 5.0).unwrap()));
        assert!(!a.intersects(&Rect::new(10.5, 0.0, 15.0, 5.0).unwrap()));
        assert!(Rect::new(1.0, 0.0, 1.0, 5.0).is_err());
    }

    fn arb_rig() -> impl Strategy<Value = CameraRig> {
        (300.0..1500.0f64, 0.0..60.0f64, 0.5..4.0f64, 0.1..1.5f64).prop_map(|(f, pitch, h, b)| {
            CameraRig::new(f, [640.0, 512.0], [1280, 1024], b, h, pitch).unwrap()
        })
    }

    proptest! {
        #[test]
        fn project_inverts_backproject(rig in arb_rig(), u in 0.0..1279.0f64, v in 0.0..1023.0f64, d in 0.2..80.0f64) {
            let p = backproject(&rig, (u, v), d).unwrap();
            let (pu, pv, pd) = project(&rig, p).unwrap();
            prop_assert!((pu - u).abs() < 1e-6 && (pv - v).abs() < 1e-6);
            prop_assert!((pd - d).abs() < 1e-9 * d.max(1.0));
        }

        #[test]
        fn ground_depth_lands_on_ground(rig in arb_rig(), u in 0.0..1279.0f64, v in 0.0..1023.0f64) {
            if let Some(d) = ground_depth(&rig, (u, v)) {
                let p = backproject(&rig, (u, v), d).unwrap();
                prop_assert!(p.y.abs() < 1e-6);
            }
        }

        #[test]
        fn rectify_round_trip(rig in arb_rig(), u in 0.0..1279.0f64, v in 0.0..1023.0f64) {
            if let Ok(l) = rectify_to_level(&rig, (u, v)) {
                let (a, b) = unrectify_from_level(&rig, l).unwrap();
                prop_assert!((a - u).abs() < 1e-9 && (b - v).abs() < 1e-9);
            }
        }
    }
}
