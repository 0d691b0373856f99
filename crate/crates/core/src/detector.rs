//! Depth-map obstacle detector.
//!
//! Pipeline: back-project valid depth pixels into the vehicle frame, drop
//! points under the road cutoff plane, accumulate the rest into a
//! ground-plane occupancy grid, close it morphologically, label 8-connected
//! components and turn every large enough component into a fronto-parallel
//! obstacle rectangle tangent to its nearest point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{backproject_unchecked, project_level, CameraRig, Rect, VehiclePoint};
use crate::image::DepthMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorParams {
    /// Height of the cutoff plane at the vehicle origin, meters.
    pub cutoff_height_m: f64,
    /// Largest road slope the cutoff plane must tolerate, degrees.
    pub tilt_allowance_deg: f64,
    pub cell_size_m: f64,
    /// Cells with fewer points are considered empty.
    pub min_points_per_cell: usize,
    /// Side of the square closing element, cells (odd).
    pub closing_kernel_cells: usize,
    /// Components with fewer cells are discarded.
    pub min_area_cells: usize,
    /// Forward extent of the occupancy grid, meters.
    pub max_range_m: f64,
    /// Lateral half extent of the occupancy grid, meters.
    pub grid_half_width_m: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams {
            cutoff_height_m: 0.3,
            tilt_allowance_deg: 10.0,
            cell_size_m: 0.1,
            min_points_per_cell: 10,
            closing_kernel_cells: 3,
            min_area_cells: 4,
            max_range_m: 20.0,
            grid_half_width_m: 4.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff_height_m > 0.0 && self.cutoff_height_m.is_finite()) {
            return Err(Error::invalid("cutoff_height_m must be positive"));
        }
        if !(0.0..45.0).contains(&self.tilt_allowance_deg) {
            return Err(Error::invalid("tilt_allowance_deg must lie in [0, 45)"));
        }
        if !(self.cell_size_m > 0.0 && self.cell_size_m.is_finite()) {
            return Err(Error::invalid("cell_size_m must be positive"));
        }
        if self.closing_kernel_cells == 0 || self.closing_kernel_cells.is_multiple_of(2) {
            return Err(Error::invalid("closing_kernel_cells must be odd and >= 1"));
        }
        if !(self.max_range_m > 0.0 && self.max_range_m.is_finite()) {
            return Err(Error::invalid("max_range_m must be positive"));
        }
        if !(self.grid_half_width_m > 0.0 && self.grid_half_width_m.is_finite()) {
            return Err(Error::invalid("grid_half_width_m must be positive"));
        }
        let cells = (self.max_range_m / self.cell_size_m) * (2.0 * self.grid_half_width_m / self.cell_size_m);
        if cells > 1e8 {
            return Err(Error::invalid("occupancy grid would exceed 1e8 cells"));
        }
        Ok(())
    }

    /// Height of the cutoff plane at forward range `z`.
    pub fn cutoff_at(&self, z: f64) -> f64 {
        self.cutoff_height_m + z * self.tilt_allowance_deg.to_radians().tan()
    }
}

/// Keeps the points strictly above the tilted cutoff plane.
pub fn cut_road_plane(points: &[VehiclePoint], params: &DetectorParams) -> Vec<VehiclePoint> {
    let slope = params.tilt_allowance_deg.to_radians().tan();
    points
        .iter()
        .copied()
        .filter(|p| p.y > params.cutoff_height_m + p.z * slope)
        .collect()
}

/// Row-major binary raster (`cols` along vehicle x, `rows` along z).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryGrid {
    pub cols: usize,
    pub rows: usize,
    pub cells: Vec<bool>,
}

impl BinaryGrid {
    pub fn empty(cols: usize, rows: usize) -> Self {
        BinaryGrid {
            cols,
            rows,
            cells: vec![false; cols * rows],
        }
    }

    #[inline]
    pub fn get(&self, c: usize, r: usize) -> bool {
        self.cells[r * self.cols + c]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    /// Square dilation; cells outside the grid count as empty.
    pub fn dilate(&self, kernel: usize) -> BinaryGrid {
        self.square_filter(kernel, false)
    }

    /// Square erosion over the in-grid part of the element, so that it is
    /// the adjoint of [`dilate`](Self::dilate) on the finite grid.
    pub fn erode(&self, kernel: usize) -> BinaryGrid {
        self.square_filter(kernel, true)
    }

    /// Closing: dilation followed by erosion.
    pub fn close(&self, kernel: usize) -> BinaryGrid {
        if kernel <= 1 {
            return self.clone();
        }
        self.dilate(kernel).erode(kernel)
    }

    // separable: rows first, then columns; `all` selects erosion
    fn square_filter(&self, kernel: usize, all: bool) -> BinaryGrid {
        let r = kernel / 2;
        let (w, h) = (self.cols, self.rows);
        let reduce = |mut it: std::ops::RangeInclusive<usize>, get: &dyn Fn(usize) -> bool| {
            if all {
                it.all(get)
            } else {
                it.any(get)
            }
        };
        let mut tmp = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let span = x.saturating_sub(r)..=(x + r).min(w - 1);
                tmp[y * w + x] = reduce(span, &|xx| self.cells[y * w + xx]);
            }
        }
        let mut out = vec![false; w * h];
        for y in 0..h {
            let span = y.saturating_sub(r)..=(y + r).min(h - 1);
            for x in 0..w {
                out[y * w + x] = reduce(span.clone(), &|yy| tmp[yy * w + x]);
            }
        }
        BinaryGrid {
            cols: w,
            rows: h,
            cells: out,
        }
    }
}

/// 8-connected component labels (0 = background, components numbered from 1
/// in raster order of their first cell) and the component count.
pub fn label_components(grid: &BinaryGrid) -> (Vec<u32>, usize) {
    let (w, h) = (grid.cols, grid.rows);
    let mut parent: Vec<u32> = vec![0];
    let mut labels = vec![0u32; w * h];

    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }

    for y in 0..h {
        for x in 0..w {
            if !grid.cells[y * w + x] {
                continue;
            }
            // already-visited neighbours: W, NW, N, NE
            let mut neigh = [0u32; 4];
            let mut n = 0;
            if x > 0 && labels[y * w + x - 1] != 0 {
                neigh[n] = labels[y * w + x - 1];
                n += 1;
            }
            if y > 0 {
                for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let l = labels[(y - 1) * w + xx];
                    if l != 0 {
                        neigh[n] = l;
                        n += 1;
                    }
                }
            }
            if n == 0 {
                let l = parent.len() as u32;
                parent.push(l);
                labels[y * w + x] = l;
            } else {
                let mut root = find(&mut parent, neigh[0]);
                for &l in &neigh[1..n] {
                    let other = find(&mut parent, l);
                    if other != root {
                        let (lo, hi) = (root.min(other), root.max(other));
                        parent[hi as usize] = lo;
                        root = lo;
                    }
                }
                labels[y * w + x] = root;
            }
        }
    }

    // compact to 1..=count in raster order
    let mut remap = vec![0u32; parent.len()];
    let mut count = 0;
    for l in labels.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = find(&mut parent, *l) as usize;
        if remap[root] == 0 {
            count += 1;
            remap[root] = count as u32;
        }
        *l = remap[root];
    }
    (labels, count)
}

/// Ground-plane projection of the above-road points.
#[derive(Clone, Debug)]
pub struct OccupancyImage {
    pub cols: usize,
    pub rows: usize,
    /// Vehicle x of the left edge of column 0.
    pub origin_x: f64,
    pub cell_size: f64,
    pub counts: Vec<u32>,
    /// Smallest point z per cell (`INFINITY` when empty).
    pub nearest_z: Vec<f64>,
    pub min_y: Vec<f64>,
    pub max_y: Vec<f64>,
    /// Binarized (and possibly closed) occupancy.
    pub occupied: BinaryGrid,
    pub min_points_per_cell: usize,
    /// Points that fell outside the grid.
    pub dropped: usize,
}

impl OccupancyImage {
    fn new(params: &DetectorParams) -> Self {
        let cols = (2.0 * params.grid_half_width_m / params.cell_size_m).ceil() as usize;
        let rows = (params.max_range_m / params.cell_size_m).ceil() as usize;
        let n = cols * rows;
        OccupancyImage {
            cols,
            rows,
            origin_x: -params.grid_half_width_m,
            cell_size: params.cell_size_m,
            counts: vec![0; n],
            nearest_z: vec![f64::INFINITY; n],
            min_y: vec![f64::INFINITY; n],
            max_y: vec![f64::NEG_INFINITY; n],
            occupied: BinaryGrid::empty(cols, rows),
            min_points_per_cell: params.min_points_per_cell,
            dropped: 0,
        }
    }

    /// Cell `(col, row)` containing a point, if inside the grid.
    pub fn cell_of(&self, x: f64, z: f64) -> Option<(usize, usize)> {
        let c = ((x - self.origin_x) / self.cell_size).floor();
        let r = (z / self.cell_size).floor();
        if c < 0.0 || r < 0.0 || c >= self.cols as f64 || r >= self.rows as f64 {
            return None;
        }
        Some((c as usize, r as usize))
    }

    /// True when the cell passed the point-count threshold before closing.
    pub fn has_support(&self, idx: usize) -> bool {
        self.counts[idx] as usize >= self.min_points_per_cell.max(1)
    }
}

/// Accumulates points into the occupancy grid and binarizes it.
pub fn build_occupancy(points: &[VehiclePoint], params: &DetectorParams) -> OccupancyImage {
    let mut img = OccupancyImage::new(params);
    for p in points {
        if p.z > params.max_range_m {
            img.dropped += 1;
            continue;
        }
        let Some((c, r)) = img.cell_of(p.x, p.z) else {
            img.dropped += 1;
            continue;
        };
        let i = r * img.cols + c;
        img.counts[i] += 1;
        img.nearest_z[i] = img.nearest_z[i].min(p.z);
        img.min_y[i] = img.min_y[i].min(p.y);
        img.max_y[i] = img.max_y[i].max(p.y);
    }
    for i in 0..img.counts.len() {
        img.occupied.cells[i] = img.has_support(i);
    }
    img
}

pub fn close_morphological(img: &OccupancyImage, params: &DetectorParams) -> OccupancyImage {
    let mut out = img.clone();
    out.occupied = img.occupied.close(params.closing_kernel_cells);
    out
}

/// An obstacle front: a vertical rectangle parallel to the image plane at
/// the component's nearest range.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectedObstacle {
    pub z_exp: f64,
    pub x_span: [f64; 2],
    pub y_span: [f64; 2],
    /// Occupied `(col, row)` cells; empty when loaded from a detections file.
    pub footprint: Vec<(usize, usize)>,
    pub area_cells: usize,
    /// Level-image rectangle of the front plane.
    pub rect: Rect,
}

/// Serialized form of a detection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleRecord {
    pub z_exp_m: f64,
    pub x_span_m: [f64; 2],
    pub y_span_m: [f64; 2],
    pub rect_px: Rect,
    pub area_cells: usize,
}

impl From<&DetectedObstacle> for ObstacleRecord {
    fn from(o: &DetectedObstacle) -> Self {
        ObstacleRecord {
            z_exp_m: o.z_exp,
            x_span_m: o.x_span,
            y_span_m: o.y_span,
            rect_px: o.rect,
            area_cells: o.area_cells,
        }
    }
}

impl ObstacleRecord {
    pub fn into_obstacle(self) -> Result<DetectedObstacle> {
        if !(self.z_exp_m > 0.0) || !(self.x_span_m[0] < self.x_span_m[1]) || !(self.y_span_m[0] < self.y_span_m[1]) {
            return Err(Error::invalid("detected obstacle needs z > 0 and nonempty spans"));
        }
        Ok(DetectedObstacle {
            z_exp: self.z_exp_m,
            x_span: self.x_span_m,
            y_span: self.y_span_m,
            footprint: Vec::new(),
            area_cells: self.area_cells,
            rect: self.rect_px,
        })
    }
}

/// Minimal vertical extent given to components whose points share one height.
const MIN_HEIGHT_SPAN_M: f64 = 0.01;

pub fn extract_obstacles(img: &OccupancyImage, params: &DetectorParams, rig: &CameraRig) -> Vec<DetectedObstacle> {
    let (labels, count) = label_components(&img.occupied);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (i, &l) in labels.iter().enumerate() {
        if l != 0 {
            members[l as usize - 1].push(i);
        }
    }

    let mut out = Vec::new();
    for cells in members {
        if cells.len() < params.min_area_cells {
            continue;
        }
        let mut z_exp = f64::INFINITY;
        let (mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut c_lo, mut c_hi) = (usize::MAX, 0);
        for &i in &cells {
            let c = i % img.cols;
            c_lo = c_lo.min(c);
            c_hi = c_hi.max(c);
            if img.has_support(i) {
                z_exp = z_exp.min(img.nearest_z[i]);
                y_lo = y_lo.min(img.min_y[i]);
                y_hi = y_hi.max(img.max_y[i]);
            }
        }
        // a component made only of closing fill carries no 3D evidence
        if !(z_exp.is_finite() && z_exp > 0.0) {
            continue;
        }
        if y_hi - y_lo < MIN_HEIGHT_SPAN_M {
            y_hi = y_lo + MIN_HEIGHT_SPAN_M;
        }
        let x_span = [
            img.origin_x + c_lo as f64 * img.cell_size,
            img.origin_x + (c_hi + 1) as f64 * img.cell_size,
        ];
        let top_left = project_level(rig, VehiclePoint::new(x_span[0], y_hi, z_exp));
        let bottom_right = project_level(rig, VehiclePoint::new(x_span[1], y_lo, z_exp));
        let rect = match (top_left, bottom_right) {
            (Ok((u0, v0)), Ok((u1, v1))) => Rect::new(u0, v0, u1, v1),
            _ => continue,
        };
        let Ok(rect) = rect else { continue };
        out.push(DetectedObstacle {
            z_exp,
            x_span,
            y_span: [y_lo, y_hi],
            footprint: cells.iter().map(|&i| (i % img.cols, i / img.cols)).collect(),
            area_cells: cells.len(),
            rect,
        });
    }
    sort_obstacles(&mut out);
    out
}

fn sort_obstacles(obstacles: &mut [DetectedObstacle]) {
    obstacles.sort_by(|a, b| {
        a.z_exp
            .total_cmp(&b.z_exp)
            .then(a.x_span[0].total_cmp(&b.x_span[0]))
            .then(a.x_span[1].total_cmp(&b.x_span[1]))
    });
}

/// Back-projects every valid depth pixel, row-parallel, in raster order.
pub fn depth_to_points(depth: &DepthMap, rig: &CameraRig) -> Vec<VehiclePoint> {
    let pose = rig.pose();
    let w = depth.width();
    (0..depth.height())
        .into_par_iter()
        .flat_map_iter(|v| {
            (0..w).filter_map(move |u| {
                depth
                    .get(u, v)
                    .map(|z| backproject_unchecked(rig, &pose, (u as f64, v as f64), z))
            })
        })
        .collect()
}

/// Full detector on one depth map; output sorted by ascending range.
pub fn detect(depth: &DepthMap, rig: &CameraRig, params: &DetectorParams) -> Result<Vec<DetectedObstacle>> {
    params.validate()?;
    if (depth.width(), depth.height()) != (rig.width(), rig.height()) {
        return Err(Error::DimensionMismatch(format!(
            "depth map is {}x{}, rig expects {}x{}",
            depth.width(),
            depth.height(),
            rig.width(),
            rig.height()
        )));
    }
    Ok(detect_points(&depth_to_points(depth, rig), rig, params))
}

/// Detector stages after back-projection.
pub fn detect_points(points: &[VehiclePoint], rig: &CameraRig, params: &DetectorParams) -> Vec<DetectedObstacle> {
    let kept = cut_road_plane(points, params);
    let occupancy = build_occupancy(&kept, params);
    let closed = close_morphological(&occupancy, params);
    extract_obstacles(&closed, params, rig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::{BTreeSet, HashMap, VecDeque};

    fn grid_from(rows: &[&str]) -> BinaryGrid {
        let cols = rows[0].len();
        let cells = rows
            .iter()
            .flat_map(|r| r.chars().map(|c| c == '#'))
            .collect();
        BinaryGrid {
            cols,
            rows: rows.len(),
            cells,
        }
    }

    #[test]
    fn cutoff_plane_examples() {
        let params = DetectorParams::default();
        // threshold at z = 3: 0.3 + 3 tan 10 = 0.82898
        assert!((params.cutoff_at(3.0) - 0.828_980_942_125_395).abs() < 1e-12);
        let pts = [VehiclePoint::new(0.0, 0.05, 3.0), VehiclePoint::new(0.0, 2.0, 3.0)];
        let kept = cut_road_plane(&pts, &params);
        assert_eq!(kept, vec![pts[1]]);
    }

    #[test]
    fn zero_tilt_is_a_height_threshold() {
        let params = DetectorParams {
            tilt_allowance_deg: 0.0,
            ..Default::default()
        };
        let pts: Vec<_> = (0..200)
            .map(|i| VehiclePoint::new(0.0, i as f64 * 0.005, (i % 17) as f64))
            .collect();
        let brute: Vec<_> = pts.iter().copied().filter(|p| p.y > 0.3).collect();
        assert_eq!(cut_road_plane(&pts, &params), brute);
    }

    #[test]
    fn occupancy_binarization() {
        let params = DetectorParams {
            min_points_per_cell: 3,
            ..Default::default()
        };
        assert_eq!(build_occupancy(&[], &params).occupied.count(), 0);
        let pts: Vec<_> = (0..10)
            .map(|i| VehiclePoint::new(0.02 + i as f64 * 0.005, 1.0, 5.01))
            .collect();
        let img = build_occupancy(&pts, &params);
        assert_eq!(img.occupied.count(), 1);
        let (c, r) = img.cell_of(0.03, 5.01).unwrap();
        assert!(img.occupied.get(c, r));
        assert_eq!(img.counts[r * img.cols + c], 10);
    }

    #[test]
    fn out_of_grid_points_are_counted() {
        let params = DetectorParams::default();
        let pts = [
            VehiclePoint::new(0.0, 1.0, 25.0),
            VehiclePoint::new(-9.0, 1.0, 5.0),
            VehiclePoint::new(0.0, 1.0, -0.5),
            VehiclePoint::new(0.0, 1.0, 5.0),
        ];
        let img = build_occupancy(&pts, &params);
        assert_eq!(img.dropped, 3);
        assert_eq!(img.counts.iter().sum::<u32>(), 1);
    }

    #[test]
    fn closing_fills_one_cell_gap() {
        let g = grid_from(&[".....", ".#.#.", "....."]);
        assert_eq!(g.close(1), g);
        let closed = g.close(3);
        assert!(closed.get(2, 1));
        assert!(closed.get(1, 1) && closed.get(3, 1));
    }

    #[test]
    fn closing_is_extensive_at_borders() {
        let g = grid_from(&["#...#", ".....", "#...#"]);
        let closed = g.close(3);
        for (a, b) in g.cells.iter().zip(&closed.cells) {
            assert!(!a || *b);
        }
    }

    #[test]
    fn labeling_eight_connectivity() {
        let g = grid_from(&["#..#", ".#.#", "...."]);
        let (labels, n) = label_components(&g);
        assert_eq!(n, 2);
        assert_eq!(labels[0], 1);
        assert_eq!(labels[5], 1);
        assert_eq!(labels[3], 2);
    }

    #[test]
    fn area_filter_boundary() {
        let rig = CameraRig::reference();
        let params = DetectorParams {
            min_points_per_cell: 1,
            closing_kernel_cells: 1,
            min_area_cells: 3,
            tilt_allowance_deg: 0.0,
            ..Default::default()
        };
        // two cells side by side at z ~ 5
        let pts = [VehiclePoint::new(0.05, 1.0, 5.05), VehiclePoint::new(0.15, 1.5, 5.02)];
        assert!(detect_points(&pts, &rig, &params).is_empty());
        let params = DetectorParams { min_area_cells: 2, ..params };
        let obs = detect_points(&pts, &rig, &params);
        assert_eq!(obs.len(), 1);
        assert_eq!(obs[0].z_exp, 5.02);
        assert_eq!(obs[0].area_cells, 2);
        assert_eq!(obs[0].y_span, [1.0, 1.5]);
        assert!((obs[0].x_span[0] - 0.0).abs() < 1e-9 && (obs[0].x_span[1] - 0.2).abs() < 1e-9);
    }

    #[test]
    fn all_invalid_depth_detects_nothing() {
        let rig = CameraRig::reference_scaled(4);
        let depth = DepthMap::invalid(rig.width(), rig.height());
        assert!(detect(&depth, &rig, &DetectorParams::default()).unwrap().is_empty());
        let wrong = DepthMap::invalid(10, 10);
        assert!(matches!(
            detect(&wrong, &rig, &DetectorParams::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn params_validation() {
        let bad = [
            DetectorParams { cutoff_height_m: 0.0, ..Default::default() },
            DetectorParams { tilt_allowance_deg: 45.0, ..Default::default() },
            DetectorParams { cell_size_m: 0.0, ..Default::default() },
            DetectorParams { closing_kernel_cells: 2, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
        assert!(DetectorParams::default().validate().is_ok());
    }

    /// Naive BFS flood fill, the reference for the union-find labeling.
    fn flood_fill_components(g: &BinaryGrid) -> Vec<BTreeSet<usize>> {
        let mut seen = vec![false; g.cells.len()];
        let mut comps = Vec::new();
        for start in 0..g.cells.len() {
            if !g.cells[start] || seen[start] {
                continue;
            }
            let mut comp = BTreeSet::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(i) = queue.pop_front() {
                comp.insert(i);
                let (x, y) = ((i % g.cols) as i64, (i / g.cols) as i64);
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= g.cols as i64 || ny >= g.rows as i64 {
                            continue;
                        }
                        let j = ny as usize * g.cols + nx as usize;
                        if g.cells[j] && !seen[j] {
                            seen[j] = true;
                            queue.push_back(j);
                        }
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    fn arb_grid() -> impl Strategy<Value = BinaryGrid> {
        (1usize..24, 1usize..24, 0.05f64..0.7).prop_flat_map(|(cols, rows, p)| {
            prop::collection::vec(prop::bool::weighted(p), cols * rows)
                .prop_map(move |cells| BinaryGrid { cols, rows, cells })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn labeling_matches_flood_fill(g in arb_grid()) {
            let (labels, n) = label_components(&g);
            let mut by_label: HashMap<u32, BTreeSet<usize>> = HashMap::new();
            for (i, &l) in labels.iter().enumerate() {
                prop_assert_eq!(l != 0, g.cells[i]);
                if l != 0 {
                    by_label.entry(l).or_default().insert(i);
                }
            }
            let mut ours: Vec<_> = by_label.into_values().collect();
            let mut reference = flood_fill_components(&g);
            prop_assert_eq!(ours.len(), n);
            ours.sort();
            reference.sort();
            prop_assert_eq!(ours, reference);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn closing_is_idempotent(g in arb_grid(), k in prop::sample::select(vec![1usize, 3, 5])) {
            let once = g.close(k);
            prop_assert_eq!(once.close(k), once.clone());
            for (a, b) in g.cells.iter().zip(&once.cells) {
                prop_assert!(!a || *b);
            }
        }

        #[test]
        fn detection_ignores_point_order(seed in any::<u64>(), n in 1usize..400) {
            use rand::{seq::SliceRandom, Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = (0..n)
                .map(|_| VehiclePoint::new(rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0), rng.random_range(0.5..12.0)))
                .collect();
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut rng);
            let rig = CameraRig::reference();
            let params = DetectorParams { min_points_per_cell: 1, min_area_cells: 1, ..Default::default() };
            prop_assert_eq!(detect_points(&pts, &rig, &params), detect_points(&shuffled, &rig, &params));
        }

        #[test]
        fn raising_min_area_never_adds_obstacles(seed in any::<u64>(), a in 1usize..8, extra in 0usize..8) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = (0..300)
                .map(|_| VehiclePoint::new(rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0), rng.random_range(0.5..8.0)))
                .collect();
            let rig = CameraRig::reference();
            let low = DetectorParams { min_points_per_cell: 1, min_area_cells: a, ..Default::default() };
            let high = DetectorParams { min_area_cells: a + extra, ..low };
            prop_assert!(detect_points(&pts, &rig, &high).len() <= detect_points(&pts, &rig, &low).len());
        }

        #[test]
        fn obstacles_are_supported_by_closed_cells(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = (0..500)
                .map(|_| VehiclePoint::new(rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.5..6.0)))
                .collect();
            let rig = CameraRig::reference();
            let params = DetectorParams { min_points_per_cell: 2, min_area_cells: 1, tilt_allowance_deg: 0.0, ..Default::default() };
            let kept = cut_road_plane(&pts, &params);
            let closed = close_morphological(&build_occupancy(&kept, &params), &params);
            for o in extract_obstacles(&closed, &params, &rig) {
                prop_assert!(o.z_exp > 0.0 && o.x_span[0] < o.x_span[1] && o.y_span[0] < o.y_span[1]);
                let mut realized = false;
                for &(c, r) in &o.footprint {
                    prop_assert!(closed.occupied.get(c, r));
                    let i = r * closed.cols + c;
                    realized |= closed.has_support(i) && closed.nearest_z[i] == o.z_exp;
                }
                prop_assert!(realized);
            }
        }
    }
}
