//! Synthetic scenes: ray-cast depth, textured stereo pairs, sensor noise
//! and ground-truth annotations.
//!
//! Rays are parameterized by camera-frame depth, so the hit parameter is the
//! depth value directly. Textures are value noise keyed by world surface
//! coordinates; both cameras see the same surface pattern.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluator::{DrivingCorridor, FrameAnnotation, MarkedObstacle};
use crate::geometry::{project_level, CameraRig, Pose, Rect, VehiclePoint};
use crate::image::{DepthMap, DisparityMap, ImageGray};

/// Axis-aligned box standing on the ground, vehicle frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub center_x: f64,
    pub center_z: f64,
    pub width: f64,
    pub depth: f64,
    pub height: f64,
}

impl BoxSpec {
    pub fn front_z(&self) -> f64 {
        self.center_z - self.depth / 2.0
    }

    pub fn x_range(&self) -> [f64; 2] {
        [self.center_x - self.width / 2.0, self.center_x + self.width / 2.0]
    }

    fn min(&self) -> [f64; 3] {
        [self.center_x - self.width / 2.0, 0.0, self.front_z()]
    }

    fn max(&self) -> [f64; 3] {
        [self.center_x + self.width / 2.0, self.height, self.center_z + self.depth / 2.0]
    }
}

fn default_ceiling() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    #[serde(default)]
    pub reflective_floor: bool,
    #[serde(default)]
    pub texture_seed: u64,
    /// Only coarse texture octaves; leaves most blocks below the matcher's
    /// texture threshold.
    #[serde(default)]
    pub low_texture: bool,
    /// Height of the surface seen in the floor where a reflected ray
    /// escapes every box.
    #[serde(default = "default_ceiling")]
    pub ceiling_height_m: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            boxes: Vec::new(),
            reflective_floor: false,
            texture_seed: 0,
            low_texture: false,
            ceiling_height_m: default_ceiling(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        for (i, b) in self.boxes.iter().enumerate() {
            for (name, v) in [("width", b.width), ("depth", b.depth), ("height", b.height)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::invalid(format!("boxes[{i}].{name} must be positive, got {v}")));
                }
            }
            if !b.center_x.is_finite() || !(b.front_z() > 0.0 && b.center_z.is_finite()) {
                return Err(Error::invalid(format!(
                    "boxes[{i}] must lie in front of the camera (front face z = {})",
                    b.front_z()
                )));
            }
        }
        if !(self.ceiling_height_m > 0.0 && self.ceiling_height_m.is_finite()) {
            return Err(Error::invalid("ceiling_height_m must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    pub dropout_prob: f64,
    pub depth_sigma_m: f64,
    pub reflection_prob: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("dropout_prob", self.dropout_prob), ("reflection_prob", self.reflection_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.depth_sigma_m >= 0.0 && self.depth_sigma_m.is_finite()) {
            return Err(Error::invalid(format!(
                "depth_sigma_m must be nonnegative, got {}",
                self.depth_sigma_m
            )));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.dropout_prob == 0.0 && self.depth_sigma_m == 0.0 && self.reflection_prob == 0.0
    }
}

/// What a pixel ray hit.
pub const HIT_SKY: i32 = -1;
pub const HIT_GROUND: i32 = 0;

/// Ray-cast depth plus per-pixel hit identity. `hits` holds [`HIT_SKY`],
/// [`HIT_GROUND`] or `i + 1` for box `i`. `mirrored` holds the depth of the
/// floor reflection for ground pixels of reflective scenes, `0.0` elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedDepth {
    pub depth: DepthMap,
    pub hits: Vec<i32>,
    pub mirrored: Vec<f64>,
}

const FACE_X: u8 = 0;
const FACE_Y: u8 = 1;

#[derive(Clone, Copy)]
struct Hit {
    t: f64,
    id: i32,
    /// Axis of the surface normal.
    axis: u8,
}

#[inline]
fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Entry parameter of the ray into an axis-aligned box, with the normal axis
/// of the entry face.
#[inline]
fn ray_box(o: [f64; 3], d: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<(f64, u8)> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    let mut axis = 0u8;
    for k in 0..3 {
        if d[k] == 0.0 {
            if o[k] < lo[k] || o[k] > hi[k] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / d[k];
        let (mut t0, mut t1) = ((lo[k] - o[k]) * inv, (hi[k] - o[k]) * inv);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        if t0 > t_near {
            t_near = t0;
            axis = k as u8;
        }
        t_far = t_far.min(t1);
    }
    (t_near <= t_far && t_near > 0.0).then_some((t_near, axis))
}

fn nearest_hit(scene: &SceneSpec, o: [f64; 3], d: [f64; 3]) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, b) in scene.boxes.iter().enumerate() {
        if let Some((t, axis)) = ray_box(o, d, b.min(), b.max()) {
            if best.is_none_or(|h| t < h.t) {
                best = Some(Hit {
                    t,
                    id: i as i32 + 1,
                    axis,
                });
            }
        }
    }
    if d[1] < 0.0 {
        let t = o[1] / -d[1];
        if best.is_none_or(|h| t < h.t) {
            best = Some(Hit {
                t,
                id: HIT_GROUND,
                axis: FACE_Y,
            });
        }
    }
    best
}

/// Continues a floor-hitting ray into the mirror world below the floor.
fn mirrored_depth(scene: &SceneSpec, o: [f64; 3], d: [f64; 3]) -> f64 {
    let mut best = (o[1] + scene.ceiling_height_m) / -d[1];
    for b in &scene.boxes {
        let (lo, hi) = (b.min(), b.max());
        let mlo = [lo[0], -hi[1], lo[2]];
        let mhi = [hi[0], -lo[1], hi[2]];
        if let Some((t, _)) = ray_box(o, d, mlo, mhi) {
            best = best.min(t);
        }
    }
    best
}

/// Direction through pixel `(u, v)` with unit camera-frame depth.
#[inline]
fn pixel_ray(rig: &CameraRig, pose: &Pose, u: f64, v: f64) -> [f64; 3] {
    let (u0, v0) = rig.principal_point();
    let f = rig.focal_px();
    let p = pose.camera_to_vehicle((u - u0) / f, (v - v0) / f, 1.0, 0.0);
    [p.x, p.y - rig.mount_height_m(), p.z]
}

fn camera_center(rig: &CameraRig, cx: f64) -> [f64; 3] {
    [cx, rig.mount_height_m(), 0.0]
}

/// Per-pixel nearest intersection with the boxes and the ground plane.
pub fn render(scene: &SceneSpec, rig: &CameraRig) -> RenderedDepth {
    let (w, h) = (rig.width(), rig.height());
    let pose = rig.pose();
    let o = camera_center(rig, 0.0);
    let mut depth = vec![0.0; w * h];
    let mut hits = vec![HIT_SKY; w * h];
    let mut mirrored = vec![0.0; w * h];
    depth
        .par_chunks_mut(w)
        .zip(hits.par_chunks_mut(w))
        .zip(mirrored.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, ((drow, hrow), mrow))| {
            for u in 0..w {
                let d = pixel_ray(rig, &pose, u as f64, v as f64);
                if let Some(hit) = nearest_hit(scene, o, d) {
                    drow[u] = hit.t;
                    hrow[u] = hit.id;
                    if hit.id == HIT_GROUND && scene.reflective_floor {
                        mrow[u] = mirrored_depth(scene, o, d);
                    }
                }
            }
        });
    RenderedDepth {
        depth: DepthMap::from_values(w, h, depth).expect("sizes agree"),
        hits,
        mirrored,
    }
}

pub fn render_depth(scene: &SceneSpec, rig: &CameraRig) -> DepthMap {
    render(scene, rig).depth
}

/// Left/right images with the left view's true disparity. `non_occluded`
/// marks left pixels whose surface point is also seen by the right camera.
#[derive(Clone, Debug, PartialEq)]
pub struct StereoPair {
    pub left: ImageGray,
    pub right: ImageGray,
    pub true_disparity: DisparityMap,
    pub non_occluded: Vec<bool>,
}

#[inline]
fn mix64(mut x: u64) -> u64 {
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[inline]
fn lattice(key: u64, i: i64, j: i64) -> f64 {
    let h = mix64(key ^ mix64((i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (j as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(key: u64, x: f64, y: f64) -> f64 {
    let (xf, yf) = (x.floor(), y.floor());
    let (i, j) = (xf as i64, yf as i64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (smooth(x - xf), smooth(y - yf));
    let a = lattice(key, i, j) + (lattice(key, i + 1, j) - lattice(key, i, j)) * sx;
    let b = lattice(key, i, j + 1) + (lattice(key, i + 1, j + 1) - lattice(key, i, j + 1)) * sx;
    a + (b - a) * sy
}

const FINE_OCTAVES: [f64; 5] = [0.02, 0.04, 0.08, 0.16, 0.32];
const COARSE_OCTAVES: [f64; 3] = [0.5, 1.0, 2.0];
const SKY_LEVEL: u8 = 150;

/// Intensity of surface `surface` at face coordinates `(a, b)`; octaves finer
/// than about two pixel footprints fade out to avoid aliasing.
fn shade(seed: u64, surface: u64, a: f64, b: f64, footprint: f64, low_texture: bool) -> u8 {
    let key = mix64(seed ^ mix64(surface.wrapping_add(1)));
    let base = 128.0 + (lattice(key, -7, 11) - 0.5) * 60.0;
    let octaves: &[f64] = if low_texture { &COARSE_OCTAVES } else { &FINE_OCTAVES };
    let mut acc = 0.0;
    for (k, &wavelength) in octaves.iter().enumerate() {
        let weight = (wavelength / footprint / 2.0 - 1.0).clamp(0.0, 1.0);
        if weight > 0.0 {
            let n = value_noise(key.wrapping_add(k as u64), a / wavelength, b / wavelength);
            acc += weight * (n - 0.5);
        }
    }
    let scale = if low_texture { 30.0 } else { 220.0 / (octaves.len() as f64).sqrt() };
    (base + acc * scale).round().clamp(0.0, 255.0) as u8
}

fn surface_intensity(scene: &SceneSpec, rig: &CameraRig, o: [f64; 3], d: [f64; 3], hit: Option<Hit>) -> u8 {
    let Some(hit) = hit else {
        return SKY_LEVEL;
    };
    let p = [o[0] + hit.t * d[0], o[1] + hit.t * d[1], o[2] + hit.t * d[2]];
    let axis = hit.axis as usize;
    let norm2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let cos = (d[axis].abs() / norm2.sqrt()).max(0.05);
    let footprint = hit.t * norm2.sqrt() / rig.focal_px() / cos;
    let (a, b) = match hit.axis {
        FACE_X => (p[2], p[1]),
        FACE_Y => (p[0], p[2]),
        _ => (p[0], p[1]),
    };
    let surface = (hit.id as u64) * 4 + hit.axis as u64;
    shade(scene.texture_seed, surface, a, b, footprint, scene.low_texture)
}

fn render_image(scene: &SceneSpec, rig: &CameraRig, cx: f64) -> ImageGray {
    let (w, h) = (rig.width(), rig.height());
    let pose = rig.pose();
    let o = camera_center(rig, cx);
    let mut pixels = vec![0u8; w * h];
    pixels.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        for (u, px) in row.iter_mut().enumerate() {
            let d = pixel_ray(rig, &pose, u as f64, v as f64);
            *px = surface_intensity(scene, rig, o, d, nearest_hit(scene, o, d));
        }
    });
    ImageGray::new(w, h, pixels).expect("sizes agree")
}

/// Renders both views by casting rays from each camera center, which is
/// inverse warping with exact nearest-hit occlusion.
pub fn render_stereo_pair(scene: &SceneSpec, rig: &CameraRig) -> StereoPair {
    let rendered = render(scene, rig);
    render_stereo_pair_from(scene, rig, &rendered)
}

pub fn render_stereo_pair_from(scene: &SceneSpec, rig: &CameraRig, rendered: &RenderedDepth) -> StereoPair {
    let (w, h) = (rig.width(), rig.height());
    let left = render_image(scene, rig, 0.0);
    let right = render_image(scene, rig, rig.baseline_m());
    let fb = rig.focal_px() * rig.baseline_m();
    let pose = rig.pose();
    let o = camera_center(rig, 0.0);
    let o_right = camera_center(rig, rig.baseline_m());

    let mut disparity = vec![-1.0; w * h];
    let mut non_occluded = vec![false; w * h];
    disparity
        .par_chunks_mut(w)
        .zip(non_occluded.par_chunks_mut(w))
        .enumerate()
        .for_each(|(v, (drow, mrow))| {
            for u in 0..w {
                let Some(z) = rendered.depth.get(u, v) else {
                    continue;
                };
                let d = fb / z;
                drow[u] = d;
                let u_right = u as f64 - d;
                if u_right < 0.0 {
                    continue;
                }
                let dir = pixel_ray(rig, &pose, u as f64, v as f64);
                let p = [o[0] + z * dir[0], o[1] + z * dir[1], o[2] + z * dir[2]];
                let to_p = sub(p, o_right);
                mrow[u] = match nearest_hit(scene, o_right, to_p) {
                    Some(hit) => hit.t >= 1.0 - 1e-7,
                    None => true,
                };
            }
        });
    StereoPair {
        left,
        right,
        true_disparity: DisparityMap::from_values(w, h, disparity).expect("sizes agree"),
        non_occluded,
    }
}

const STREAM_DROPOUT: u64 = 0;
const STREAM_REFLECTION: u64 = 1;
const STREAM_NOISE: u64 = 2;

fn row_rng(seed: u64, row: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64 * 3 + stream);
    rng
}

/// Applies dropout, floor reflections and Gaussian depth noise, in that
/// order. Every image row owns three ChaCha8 streams (dropout, reflection,
/// noise); the first two are advanced once per pixel whatever the pixel's
/// state, so a pixel's dropout decision depends only on the seed and its
/// position.
pub fn corrupt(rendered: &RenderedDepth, noise: &NoiseSpec) -> DepthMap {
    let depth = &rendered.depth;
    let w = depth.width();
    if noise.is_identity() {
        return depth.clone();
    }
    let gauss = Normal::new(0.0, noise.depth_sigma_m).expect("sigma validated");
    let mut out = depth.values().to_vec();
    out.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        let mut drop_rng = row_rng(noise.seed, v, STREAM_DROPOUT);
        let mut refl_rng = row_rng(noise.seed, v, STREAM_REFLECTION);
        let mut noise_rng = row_rng(noise.seed, v, STREAM_NOISE);
        for (u, z) in row.iter_mut().enumerate() {
            let drop_draw: f64 = drop_rng.random();
            let refl_draw: f64 = refl_rng.random();
            if *z <= 0.0 {
                continue;
            }
            if drop_draw < noise.dropout_prob {
                *z = 0.0;
                continue;
            }
            let mirrored = rendered.mirrored[v * w + u];
            if mirrored > 0.0 && refl_draw < noise.reflection_prob {
                *z = mirrored;
            }
            if noise.depth_sigma_m > 0.0 {
                let noisy = *z + gauss.sample(&mut noise_rng);
                *z = if noisy > 0.0 { noisy } else { 0.0 };
            }
        }
    });
    DepthMap::from_values(w, depth.height(), out).expect("sizes agree")
}

/// Marks every box with at least one rendered pixel; the rectangle is the
/// level-image outline of its front face.
pub fn annotate(scene: &SceneSpec, rig: &CameraRig, corridor: &DrivingCorridor) -> FrameAnnotation {
    annotate_rendered(scene, rig, corridor, &render(scene, rig))
}

pub fn annotate_rendered(
    scene: &SceneSpec,
    rig: &CameraRig,
    corridor: &DrivingCorridor,
    rendered: &RenderedDepth,
) -> FrameAnnotation {
    let mut visible = vec![false; scene.boxes.len()];
    for &id in &rendered.hits {
        if id > 0 {
            visible[id as usize - 1] = true;
        }
    }
    let marked = scene
        .boxes
        .iter()
        .zip(visible)
        .filter(|(_, vis)| *vis)
        .filter_map(|(b, _)| marked_front(rig, b))
        .collect();
    FrameAnnotation {
        frame_id: String::new(),
        marked,
        indifference: Vec::new(),
        corridor: *corridor,
    }
}

fn marked_front(rig: &CameraRig, b: &BoxSpec) -> Option<MarkedObstacle> {
    let z = b.front_z();
    let [x0, x1] = b.x_range();
    let (u0, v0) = project_level(rig, VehiclePoint::new(x0, b.height, z)).ok()?;
    let (u1, v1) = project_level(rig, VehiclePoint::new(x1, 0.0, z)).ok()?;
    let rect = Rect::new(u0, v0, u1, v1).ok()?;
    MarkedObstacle::new(rect, z).ok()
}

/// One frame of a scene suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub scene: SceneSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl SuiteEntry {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.noise.validate()
    }
}

/// Recipe for a randomized suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomSuite {
    pub frames: usize,
    pub seed: u64,
    pub max_boxes: usize,
    pub width_m: [f64; 2],
    pub depth_m: [f64; 2],
    pub height_m: [f64; 2],
    pub front_z_m: [f64; 2],
    pub lateral_m: [f64; 2],
    /// Fraction of frames whose boxes all stay out of the corridor.
    pub clear_fraction: f64,
    /// Corridor used to keep clear frames clear.
    pub corridor: DrivingCorridor,
    /// Fraction of frames with a reflective floor; these get `noise`.
    pub reflective_fraction: f64,
    pub noise: NoiseSpec,
    pub low_texture_fraction: f64,
}

impl Default for RandomSuite {
    fn default() -> Self {
        RandomSuite {
            frames: 200,
            seed: 1,
            max_boxes: 3,
            width_m: [0.4, 2.0],
            depth_m: [0.3, 1.0],
            height_m: [0.5, 2.0],
            front_z_m: [2.0, 7.0],
            lateral_m: [-3.0, 3.0],
            clear_fraction: 0.4,
            corridor: DrivingCorridor::default(),
            reflective_fraction: 0.0,
            noise: NoiseSpec::default(),
            low_texture_fraction: 0.0,
        }
    }
}

impl RandomSuite {
    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("width_m", self.width_m),
            ("depth_m", self.depth_m),
            ("height_m", self.height_m),
            ("front_z_m", self.front_z_m),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a positive range, got [{lo}, {hi}]")));
            }
        }
        if !(self.lateral_m[0] <= self.lateral_m[1]) {
            return Err(Error::invalid("lateral_m must be an ordered range"));
        }
        for (name, p) in [
            ("clear_fraction", self.clear_fraction),
            ("reflective_fraction", self.reflective_fraction),
            ("low_texture_fraction", self.low_texture_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        self.corridor.validate()?;
        self.noise.validate()
    }

    /// Draws the suite. Boxes never overlap each other in bearing, so every
    /// marked box is fully visible unless it leaves the image.
    pub fn build(&self) -> Result<Vec<SuiteEntry>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.frames);
        for _ in 0..self.frames {
            let clear = rng.random::<f64>() < self.clear_fraction;
            let reflective = rng.random::<f64>() < self.reflective_fraction;
            let low_texture = rng.random::<f64>() < self.low_texture_fraction;
            let n_boxes = rng.random_range(0..=self.max_boxes);
            let mut boxes: Vec<BoxSpec> = Vec::new();
            let mut attempts = 0;
            while boxes.len() < n_boxes && attempts < 200 {
                attempts += 1;
                let b = self.draw_box(&mut rng);
                let overlaps_corridor = self.touches_corridor(&b);
                if clear == overlaps_corridor {
                    continue;
                }
                if boxes.iter().all(|o| !bearings_overlap(o, &b)) {
                    boxes.push(b);
                }
            }
            let scene = SceneSpec {
                boxes,
                reflective_floor: reflective,
                texture_seed: rng.random(),
                low_texture,
                ceiling_height_m: default_ceiling(),
            };
            let noise = if reflective {
                NoiseSpec {
                    seed: rng.random(),
                    ..self.noise
                }
            } else {
                NoiseSpec {
                    seed: rng.random(),
                    ..NoiseSpec::default()
                }
            };
            out.push(SuiteEntry { id: None, scene, noise });
        }
        Ok(out)
    }

    fn draw_box(&self, rng: &mut ChaCha8Rng) -> BoxSpec {
        let mut range = |[lo, hi]: [f64; 2]| if lo < hi { rng.random_range(lo..hi) } else { lo };
        let width = range(self.width_m);
        let depth = range(self.depth_m);
        let height = range(self.height_m);
        let front = range(self.front_z_m);
        let center_x = range(self.lateral_m);
        BoxSpec {
            center_x,
            center_z: front + depth / 2.0,
            width,
            depth,
            height,
        }
    }

    fn touches_corridor(&self, b: &BoxSpec) -> bool {
        let half = self.corridor.width_m / 2.0;
        let [x0, x1] = b.x_range();
        x0 <= half && x1 >= -half && b.front_z() <= self.corridor.length_m
    }
}

/// Bearing interval of a box footprint as seen from the origin, padded.
fn bearing(b: &BoxSpec) -> [f64; 2] {
    let [x0, x1] = b.x_range();
    let (zf, zb) = (b.front_z(), b.center_z + b.depth / 2.0);
    let angles = [x0.atan2(zf), x0.atan2(zb), x1.atan2(zf), x1.atan2(zb)];
    let lo = angles.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = angles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [lo - 0.03, hi + 0.03]
}

fn bearings_overlap(a: &BoxSpec, b: &BoxSpec) -> bool {
    let (ba, bb) = (bearing(a), bearing(b));
    ba[0] <= bb[1] && bb[0] <= ba[1]
}
