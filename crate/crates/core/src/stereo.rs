//! Local block-matching stereo (SAD cost) and disparity/depth conversion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraRig;
use crate::image::{DepthMap, DisparityMap, ImageGray, INVALID_DISPARITY};

/// Block matcher settings. All of these are sweepable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StereoParams {
    /// Odd block side, pixels.
    pub block_size: usize,
    /// Largest disparity searched, pixels.
    pub max_disparity: usize,
    /// A pixel is rejected when some disparity more than one step away from
    /// the best one costs at most `best * (1 + uniqueness_ratio)`.
    pub uniqueness_ratio: f64,
    /// Maximum left/right disagreement, pixels.
    pub lr_consistency_tol: f64,
    /// Minimum mean absolute horizontal Sobel response inside the block.
    pub texture_threshold: f64,
    /// Three-point parabola refinement around the integer minimum.
    pub subpixel: bool,
}

impl Default for StereoParams {
    fn default() -> Self {
        StereoParams {
            block_size: 9,
            max_disparity: 256,
            uniqueness_ratio: 0.10,
            lr_consistency_tol: 1.0,
            texture_threshold: 2.0,
            subpixel: true,
        }
    }
}

impl StereoParams {
    pub fn validate(&self) -> Result<()> {
        if self.block_size < 3 || self.block_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "block_size must be odd and >= 3, got {}",
                self.block_size
            )));
        }
        if self.max_disparity < 1 {
            return Err(Error::invalid("max_disparity must be >= 1"));
        }
        for (name, v) in [
            ("uniqueness_ratio", self.uniqueness_ratio),
            ("lr_consistency_tol", self.lr_consistency_tol),
            ("texture_threshold", self.texture_threshold),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Disparity maps referenced to the left and to the right image.
///
/// The right map holds integer winner-take-all disparities and only serves
/// the left/right consistency check.
#[derive(Clone, Debug)]
pub struct StereoMaps {
    pub left: DisparityMap,
    pub right: DisparityMap,
}

/// Dense left-referenced disparity from a rectified pair.
pub fn match_block(left: &ImageGray, right: &ImageGray, params: &StereoParams) -> Result<DisparityMap> {
    Ok(match_block_pair(left, right, params)?.left)
}

const ROWS_PER_JOB: usize = 32;

pub fn match_block_pair(left: &ImageGray, right: &ImageGray, params: &StereoParams) -> Result<StereoMaps> {
    params.validate()?;
    let (w, h) = (left.width(), left.height());
    if (w, h) != (right.width(), right.height()) {
        return Err(Error::DimensionMismatch(format!(
            "left is {w}x{h}, right is {}x{}",
            right.width(),
            right.height()
        )));
    }
    if params.block_size > w || params.block_size > h {
        return Err(Error::invalid(format!(
            "block of {} px does not fit a {w}x{h} image",
            params.block_size
        )));
    }

    let mut out = StereoMaps {
        left: DisparityMap::invalid(w, h),
        right: DisparityMap::invalid(w, h),
    };
    let r = params.block_size / 2;
    let dmax = params.max_disparity;
    // left pixels need a full block and the full disparity range
    if w < dmax + 2 * r + 1 {
        return Ok(out);
    }
    let texture = TextureIndex::new(left);
    let ctx = MatchContext {
        left,
        right,
        params,
        texture: &texture,
        r,
        dmax,
    };

    out.left
        .values_mut()
        .par_chunks_mut(w * ROWS_PER_JOB)
        .zip(out.right.values_mut().par_chunks_mut(w * ROWS_PER_JOB))
        .enumerate()
        .for_each(|(job, (lrows, rrows))| {
            let first = job * ROWS_PER_JOB;
            ctx.match_rows(first, lrows, rrows);
        });
    Ok(out)
}

struct MatchContext<'a> {
    left: &'a ImageGray,
    right: &'a ImageGray,
    params: &'a StereoParams,
    texture: &'a TextureIndex,
    r: usize,
    dmax: usize,
}

impl MatchContext<'_> {
    /// Fills the output rows `first..first + rows` (row slices of the maps).
    fn match_rows(&self, first: usize, lrows: &mut [f64], rrows: &mut [f64]) {
        let w = self.left.width();
        let h = self.left.height();
        let r = self.r;
        let dmax = self.dmax;
        let nd = dmax + 1;
        let rows = lrows.len() / w;
        let lo = first.max(r);
        let hi = (first + rows).min(h - r);
        if lo >= hi {
            return;
        }

        // column sums over the vertical window, for columns dmax..w
        let cw = w - dmax;
        let mut colsum = vec![0u32; nd * cw];
        let mut cost = vec![0u32; nd * cw];
        for y in lo - r..=lo + r {
            self.accumulate_row(&mut colsum, y, true);
        }

        let u_lo = dmax + r;
        let u_hi = w - r; // exclusive
        let block = self.params.block_size;
        let mut best_c = vec![0u32; w];
        let mut best_d = vec![0usize; w];
        let mut second = vec![0u32; w];
        let mut rbest_c = vec![0u32; w];
        let mut rbest_d = vec![0usize; w];

        for v in lo..hi {
            if v > lo {
                self.accumulate_row(&mut colsum, v + r, true);
                self.accumulate_row(&mut colsum, v - r - 1, false);
            }

            // horizontal box sums; cost[d][u - dmax] valid for u in u_lo..u_hi
            for d in 0..nd {
                let cs = &colsum[d * cw..(d + 1) * cw];
                let cd = &mut cost[d * cw..(d + 1) * cw];
                let mut s: u32 = cs[..block].iter().sum();
                cd[r] = s;
                for i in r + 1..cw - r {
                    s = s.wrapping_add(cs[i + r]).wrapping_sub(cs[i - r - 1]);
                    cd[i] = s;
                }
            }

            // winner-take-all, ties toward the smaller disparity
            best_c[u_lo..u_hi].fill(u32::MAX);
            for d in 0..nd {
                let cd = &cost[d * cw..(d + 1) * cw];
                for u in u_lo..u_hi {
                    let c = cd[u - dmax];
                    if c < best_c[u] {
                        best_c[u] = c;
                        best_d[u] = d;
                    }
                }
            }
            second[u_lo..u_hi].fill(u32::MAX);
            for d in 0..nd {
                let cd = &cost[d * cw..(d + 1) * cw];
                for u in u_lo..u_hi {
                    let c = cd[u - dmax];
                    if c < second[u] && best_d[u].abs_diff(d) > 1 {
                        second[u] = c;
                    }
                }
            }

            // right-referenced winners over the same cost slice
            rbest_c.fill(u32::MAX);
            for d in 0..nd {
                let cd = &cost[d * cw..(d + 1) * cw];
                for u in u_lo..u_hi {
                    let ur = u - d;
                    let c = cd[u - dmax];
                    if c < rbest_c[ur] {
                        rbest_c[ur] = c;
                        rbest_d[ur] = d;
                    }
                }
            }

            let row = v - first;
            let lout = &mut lrows[row * w..(row + 1) * w];
            let rout = &mut rrows[row * w..(row + 1) * w];
            for ur in 0..w {
                if rbest_c[ur] != u32::MAX {
                    rout[ur] = rbest_d[ur] as f64;
                }
            }
            for u in u_lo..u_hi {
                lout[u] = self.finish_pixel(u, v, best_c[u], best_d[u], second[u], &rbest_d, &cost, cw);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    #[inline]
    fn finish_pixel(
        &self,
        u: usize,
        v: usize,
        best_c: u32,
        best_d: usize,
        second: u32,
        rbest_d: &[usize],
        cost: &[u32],
        cw: usize,
    ) -> f64 {
        let p = self.params;
        if second != u32::MAX && (second as f64) <= best_c as f64 * (1.0 + p.uniqueness_ratio) {
            return INVALID_DISPARITY;
        }
        if p.texture_threshold > 0.0 && self.texture.mean(u, v, self.r) < p.texture_threshold {
            return INVALID_DISPARITY;
        }
        let dr = rbest_d[u - best_d];
        if (best_d as f64 - dr as f64).abs() > p.lr_consistency_tol {
            return INVALID_DISPARITY;
        }
        let mut d = best_d as f64;
        if p.subpixel && best_d > 0 && best_d < self.dmax {
            let at = |dd: usize| cost[dd * cw + u - self.dmax] as f64;
            let (cm, c0, cp) = (at(best_d - 1), at(best_d), at(best_d + 1));
            let denom = cm - 2.0 * c0 + cp;
            if denom > 0.0 {
                d = best_d as f64 + (cm - cp) / (2.0 * denom);
            }
        }
        d
    }

    /// Adds (or removes) one image row's absolute differences to the column sums.
    #[inline]
    fn accumulate_row(&self, colsum: &mut [u32], y: usize, add: bool) {
        let lrow = self.left.row(y);
        let rrow = self.right.row(y);
        let w = lrow.len();
        let cw = w - self.dmax;
        let lseg = &lrow[self.dmax..];
        for d in 0..=self.dmax {
            let rseg = &rrow[self.dmax - d..w - d];
            let cs = &mut colsum[d * cw..(d + 1) * cw];
            if add {
                for ((c, &a), &b) in cs.iter_mut().zip(lseg).zip(rseg) {
                    *c = c.wrapping_add(a.abs_diff(b) as u32);
                }
            } else {
                for ((c, &a), &b) in cs.iter_mut().zip(lseg).zip(rseg) {
                    *c = c.wrapping_sub(a.abs_diff(b) as u32);
                }
            }
        }
    }
}

/// Summed-area table of the absolute horizontal Sobel response.
struct TextureIndex {
    width: usize,
    sums: Vec<u64>,
}

impl TextureIndex {
    fn new(img: &ImageGray) -> Self {
        let (w, h) = (img.width(), img.height());
        let mut sums = vec![0u64; (w + 1) * (h + 1)];
        for v in 0..h {
            let mut run = 0u64;
            for u in 0..w {
                run += sobel_x_abs(img, u, v) as u64;
                sums[(v + 1) * (w + 1) + u + 1] = sums[v * (w + 1) + u + 1] + run;
            }
        }
        TextureIndex { width: w, sums }
    }

    fn mean(&self, u: usize, v: usize, r: usize) -> f64 {
        let s = |x: usize, y: usize| self.sums[y * (self.width + 1) + x];
        let (x0, y0, x1, y1) = (u - r, v - r, u + r + 1, v + r + 1);
        let total = s(x1, y1) + s(x0, y0) - s(x0, y1) - s(x1, y0);
        total as f64 / ((2 * r + 1) * (2 * r + 1)) as f64
    }
}

fn sobel_x_abs(img: &ImageGray, u: usize, v: usize) -> u32 {
    if u == 0 || v == 0 || u + 1 >= img.width() || v + 1 >= img.height() {
        return 0;
    }
    let p = |x: usize, y: usize| img.get(x, y) as i32;
    let gx = (p(u + 1, v - 1) + 2 * p(u + 1, v) + p(u + 1, v + 1))
        - (p(u - 1, v - 1) + 2 * p(u - 1, v) + p(u - 1, v + 1));
    gx.unsigned_abs()
}

/// Mean absolute horizontal Sobel response over a block, as used by the
/// texture gate. Exposed for building "textured" evaluation masks.
pub fn texture_measure(img: &ImageGray, block_size: usize) -> Vec<Option<f64>> {
    let idx = TextureIndex::new(img);
    let r = block_size / 2;
    let (w, h) = (img.width(), img.height());
    let mut out = vec![None; w * h];
    for v in r..h.saturating_sub(r) {
        for u in r..w.saturating_sub(r) {
            out[v * w + u] = Some(idx.mean(u, v, r));
        }
    }
    out
}

/// `z = focal * baseline / d`; zero disparity or depth beyond `far_clip_m`
/// becomes invalid.
pub fn disparity_to_depth(disp: &DisparityMap, rig: &CameraRig, far_clip_m: f64) -> DepthMap {
    let fb = rig.focal_px() * rig.baseline_m();
    let values = disp
        .values()
        .iter()
        .map(|&d| {
            if d > 0.0 {
                let z = fb / d;
                if z <= far_clip_m {
                    return z;
                }
            }
            0.0
        })
        .collect();
    DepthMap::from_values(disp.width(), disp.height(), values).expect("same dimensions")
}

/// `d = focal * baseline / z` on valid pixels.
pub fn depth_to_disparity(depth: &DepthMap, rig: &CameraRig) -> DisparityMap {
    let fb = rig.focal_px() * rig.baseline_m();
    let values = depth
        .values()
        .iter()
        .map(|&z| if z > 0.0 { fb / z } else { INVALID_DISPARITY })
        .collect();
    DisparityMap::from_values(depth.width(), depth.height(), values).expect("same dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_texture(w: usize, h: usize, seed: u64) -> ImageGray {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageGray::from_fn(w, h, |_, _| rng.random())
    }

    /// right(u) = left(u + shift), i.e. every pixel has disparity `shift`.
    fn shifted(left: &ImageGray, shift: usize, seed: u64) -> ImageGray {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = left.width();
        ImageGray::from_fn(w, left.height(), |u, v| {
            if u + shift < w {
                left.get(u + shift, v)
            } else {
                rng.random()
            }
        })
    }

    fn params(max_disparity: usize) -> StereoParams {
        StereoParams {
            block_size: 7,
            max_disparity,
            uniqueness_ratio: 0.05,
            lr_consistency_tol: 1.0,
            texture_threshold: 0.0,
            subpixel: false,
        }
    }

    #[test]
    fn identical_images_give_zero_disparity() {
        let img = random_texture(96, 48, 1);
        let disp = match_block(&img, &img, &params(16)).unwrap();
        assert!(disp.valid_count() > 0);
        for v in 0..48 {
            for u in 0..96 {
                if let Some(d) = disp.get(u, v) {
                    assert_eq!(d, 0.0, "pixel ({u}, {v})");
                }
            }
        }
    }

    #[test]
    fn pure_translation_recovered_exactly() {
        let left = random_texture(120, 40, 2);
        let right = shifted(&left, 7, 3);
        let disp = match_block(&left, &right, &params(20)).unwrap();
        let mut valid = 0;
        for v in 0..40 {
            for u in 0..120 {
                if let Some(d) = disp.get(u, v) {
                    assert_eq!(d, 7.0, "pixel ({u}, {v})");
                    valid += 1;
                }
            }
        }
        // all interior pixels away from the right edge survive
        assert!(valid > (120 - 20 - 6 - 7) * (40 - 6) * 9 / 10);
    }

    #[test]
    fn subpixel_keeps_exact_translation() {
        let left = random_texture(100, 30, 4);
        let right = shifted(&left, 5, 5);
        let p = StereoParams { subpixel: true, ..params(12) };
        let disp = match_block(&left, &right, &p).unwrap();
        let (mut n, mut max_err) = (0, 0.0f64);
        for v in 0..30 {
            for u in 0..80 {
                if let Some(d) = disp.get(u, v) {
                    max_err = max_err.max((d - 5.0).abs());
                    n += 1;
                }
            }
        }
        assert!(n > 0);
        assert!(max_err < 0.5, "max error {max_err}");
    }

    #[test]
    fn border_pixels_are_invalid() {
        let left = random_texture(80, 30, 6);
        let right = shifted(&left, 3, 7);
        let disp = match_block(&left, &right, &params(10)).unwrap();
        for v in 0..30 {
            for u in 0..80 {
                let interior = (3..27).contains(&v) && (13..77).contains(&u);
                if !interior {
                    assert_eq!(disp.get(u, v), None, "pixel ({u}, {v})");
                }
            }
        }
    }

    #[test]
    fn flat_images_fail_texture_and_uniqueness() {
        let flat = ImageGray::filled(64, 32, 128);
        let disp = match_block(&flat, &flat, &StereoParams { texture_threshold: 1.0, ..params(8) }).unwrap();
        assert_eq!(disp.valid_count(), 0);
        // uniqueness alone also rejects: every disparity ties at cost zero
        let disp = match_block(&flat, &flat, &params(8)).unwrap();
        assert_eq!(disp.valid_count(), 0);
    }

    #[test]
    fn argument_errors() {
        let a = random_texture(40, 20, 8);
        let b = random_texture(41, 20, 9);
        assert!(matches!(match_block(&a, &b, &params(4)), Err(Error::DimensionMismatch(_))));
        let big = StereoParams { block_size: 21, ..params(4) };
        assert!(matches!(match_block(&a, &a, &big), Err(Error::InvalidArgument(_))));
        let even = StereoParams { block_size: 4, ..params(4) };
        assert!(match_block(&a, &a, &even).is_err());
    }

    #[test]
    fn left_right_consistency_holds() {
        let left = random_texture(90, 30, 10);
        let right = shifted(&left, 4, 11);
        let p = StereoParams { lr_consistency_tol: 0.0, ..params(12) };
        let maps = match_block_pair(&left, &right, &p).unwrap();
        for v in 0..30 {
            for u in 0..90 {
                if let Some(d) = maps.left.get(u, v) {
                    let dr = maps.right.get(u - d as usize, v).expect("right disparity present");
                    assert!((d - dr).abs() <= p.lr_consistency_tol);
                }
            }
        }
    }

    #[test]
    fn depth_conversion() {
        let rig = CameraRig::reference();
        let mut disp = DisparityMap::invalid(3, 1);
        disp.set(0, 0, Some(114.4));
        disp.set(1, 0, Some(0.0));
        let depth = disparity_to_depth(&disp, &rig, 100.0);
        // 762.7223 * 0.75 / 114.4 by hand
        approx::assert_abs_diff_eq!(depth.get(0, 0).unwrap(), 5.000_364_724_171_51, epsilon = 1e-9);
        assert_eq!(depth.get(1, 0), None);
        assert_eq!(depth.get(2, 0), None);
        let clipped = disparity_to_depth(&disp, &rig, 4.0);
        assert_eq!(clipped.get(0, 0), None);
    }

    #[test]
    fn depth_is_strictly_decreasing_in_disparity() {
        let rig = CameraRig::reference();
        let values: Vec<f64> = (1..200).map(|i| i as f64 * 0.5).collect();
        let disp = DisparityMap::from_values(values.len(), 1, values).unwrap();
        let depth = disparity_to_depth(&disp, &rig, f64::INFINITY);
        let z = depth.values();
        assert!(z.windows(2).all(|p| p[1] < p[0]));
    }

    #[test]
    fn depth_disparity_round_trip() {
        let rig = CameraRig::reference();
        let values: Vec<f64> = (0..50).map(|i| 0.5 + i as f64 * 3.7).collect();
        let disp = DisparityMap::from_values(50, 1, values).unwrap();
        let back = depth_to_disparity(&disparity_to_depth(&disp, &rig, f64::INFINITY), &rig);
        for (a, b) in disp.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
