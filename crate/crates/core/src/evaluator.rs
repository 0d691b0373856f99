//! Stop-decision quality metric.
//!
//! Marked (ground-truth) obstacles are matched against detected ones; a pair
//! matches when the relative depth error is below `T` and the two level-image
//! rectangles intersect. Matching is many-to-many. Only obstacles inside the
//! driving corridor take part in the per-frame stop verdict:
//!
//! | corridor labels            | verdict              |
//! |----------------------------|----------------------|
//! | at least one TP            | true-positive stop   |
//! | only FP                    | false-positive stop  |
//! | FN (with or without FP)    | false-negative stop  |
//! | nothing                    | true negative        |
//!
//! The last row stands in for the literal "otherwise true positive" rule,
//! which would make the false-positive rate uncomputable: a frame with no
//! obstacles and no detections is a correct non-stop, not a correct stop.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::detector::DetectedObstacle;
use crate::error::{Error, Result};
use crate::geometry::{CameraRig, Rect};

/// Ground-truth obstacle: level-image rectangle plus calibrated range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkedObstacle {
    pub rect_px: Rect,
    pub z_ref_m: f64,
}

impl MarkedObstacle {
    pub fn new(rect_px: Rect, z_ref_m: f64) -> Result<Self> {
        let m = MarkedObstacle { rect_px, z_ref_m };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z_ref_m > 0.0 && self.z_ref_m.is_finite()) {
            return Err(Error::invalid(format!("z_ref_m must be positive, got {}", self.z_ref_m)));
        }
        Ok(())
    }

    /// Lateral span of the obstacle on the ground, from the rectangle's
    /// columns back-projected at `z_ref`.
    pub fn lateral_span(&self, rig: &CameraRig) -> [f64; 2] {
        let (u0, _) = rig.principal_point();
        let s = self.z_ref_m / rig.focal_px();
        [(self.rect_px.u0 - u0) * s, (self.rect_px.u1 - u0) * s]
    }
}

/// Region where detections are neither rewarded nor penalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ZoneRecord", into = "ZoneRecord")]
pub struct IndifferenceZone {
    polygon: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ZoneRecord {
    polygon_px: Vec<[f64; 2]>,
}

impl TryFrom<ZoneRecord> for IndifferenceZone {
    type Error = Error;

    fn try_from(r: ZoneRecord) -> Result<Self> {
        IndifferenceZone::new(r.polygon_px.into_iter().map(|[u, v]| (u, v)).collect())
    }
}

impl From<IndifferenceZone> for ZoneRecord {
    fn from(z: IndifferenceZone) -> Self {
        ZoneRecord {
            polygon_px: z.polygon.into_iter().map(|(u, v)| [u, v]).collect(),
        }
    }
}

impl IndifferenceZone {
    /// Simple polygon with at least three vertices.
    pub fn new(polygon: Vec<(f64, f64)>) -> Result<Self> {
        if polygon.len() < 3 {
            return Err(Error::invalid("indifference zone needs at least 3 vertices"));
        }
        if polygon.iter().any(|(u, v)| !u.is_finite() || !v.is_finite()) {
            return Err(Error::invalid("indifference zone vertices must be finite"));
        }
        let n = polygon.len();
        for i in 0..n {
            for j in i + 1..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (a, b) = (polygon[i], polygon[(i + 1) % n]);
                let (c, d) = (polygon[j], polygon[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(Error::invalid("indifference zone polygon self-intersects"));
                }
            }
        }
        if polygon_area(&polygon).abs() == 0.0 {
            return Err(Error::invalid("indifference zone has zero area"));
        }
        Ok(IndifferenceZone { polygon })
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.polygon
    }

    /// Closed-set intersection of the polygon with a rectangle.
    pub fn intersects_rect(&self, rect: &Rect) -> bool {
        if self.polygon.iter().any(|&p| rect.contains(p)) {
            return true;
        }
        if rect.corners().iter().any(|&c| point_in_polygon(c, &self.polygon)) {
            return true;
        }
        let corners = rect.corners();
        let n = self.polygon.len();
        (0..n).any(|i| {
            let (a, b) = (self.polygon[i], self.polygon[(i + 1) % n]);
            (0..4).any(|k| segments_intersect(a, b, corners[k], corners[(k + 1) % 4]))
        })
    }
}

fn polygon_area(p: &[(f64, f64)]) -> f64 {
    let n = p.len();
    (0..n)
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
        / 2.0
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn on_segment(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed segments `ab` and `cd` share at least one point.
fn segments_intersect(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// Even-odd rule; boundary points are handled by the edge tests of the caller.
fn point_in_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < (b.0 - a.0) * (p.1 - a.1) / (b.1 - a.1) + a.0 {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Ground rectangle `|x| <= width/2`, `0 < z <= length`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrivingCorridor {
    pub width_m: f64,
    pub length_m: f64,
}

impl Default for DrivingCorridor {
    fn default() -> Self {
        DrivingCorridor {
            width_m: 2.5,
            length_m: 7.0,
        }
    }
}

impl DrivingCorridor {
    pub fn new(width_m: f64, length_m: f64) -> Result<Self> {
        let c = DrivingCorridor { width_m, length_m };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width_m > 0.0 && self.length_m > 0.0 && self.width_m.is_finite() && self.length_m.is_finite()) {
            return Err(Error::invalid("corridor width and length must be positive"));
        }
        Ok(())
    }
}

/// Corridor membership of a ground footprint: lateral overlap and front
/// inside the corridor length.
pub fn in_corridor(x_span: [f64; 2], z_front: f64, corridor: &DrivingCorridor) -> bool {
    let half = corridor.width_m / 2.0;
    x_span[0] <= half && x_span[1] >= -half && z_front > 0.0 && z_front <= corridor.length_m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchConfig {
    /// Relative depth threshold.
    #[serde(rename = "T")]
    pub t: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig { t: 0.25 }
    }
}

impl MatchConfig {
    pub fn new(t: f64) -> Result<Self> {
        let c = MatchConfig { t };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t > 0.0 && self.t < 1.0) {
            return Err(Error::invalid(format!("T must lie in (0, 1), got {}", self.t)));
        }
        Ok(())
    }
}

/// `|z_ref - z_exp| / z_ref < T`, strictly.
pub fn depth_condition(z_ref: f64, z_exp: f64, cfg: &MatchConfig) -> Result<bool> {
    if !(z_ref > 0.0) || !(z_exp > 0.0) {
        return Err(Error::invalid(format!(
            "distances must be positive (z_ref {z_ref}, z_exp {z_exp})"
        )));
    }
    Ok((z_ref - z_exp).abs() / z_ref < cfg.t)
}

#[inline]
fn pair_matches(m: &MarkedObstacle, d: &DetectedObstacle, cfg: &MatchConfig) -> bool {
    (m.z_ref_m - d.z_exp).abs() / m.z_ref_m < cfg.t && m.rect_px.intersects(&d.rect)
}

/// Ground truth for one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameAnnotation {
    pub frame_id: String,
    pub marked: Vec<MarkedObstacle>,
    pub indifference: Vec<IndifferenceZone>,
    pub corridor: DrivingCorridor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObstacleLabel {
    TruePositive,
    FalsePositive,
    FalseNegative,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarkedLabel {
    pub label: ObstacleLabel,
    /// Indices of the matching detections.
    pub matched: Vec<usize>,
    pub in_corridor: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DetectedClass {
    /// Matches the listed marked obstacles.
    Supporting(Vec<usize>),
    FalsePositive,
    /// Unmatched but touching an indifference zone.
    Absorbed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetectedLabel {
    pub class: DetectedClass,
    pub in_corridor: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FrameLabels {
    pub marked: Vec<MarkedLabel>,
    pub detected: Vec<DetectedLabel>,
}

impl FrameLabels {
    /// The labels that take part in the stop verdict.
    pub fn corridor_labels(&self) -> Vec<ObstacleLabel> {
        let marked = self.marked.iter().filter(|m| m.in_corridor).map(|m| m.label);
        let fps = self
            .detected
            .iter()
            .filter(|d| d.in_corridor && d.class == DetectedClass::FalsePositive)
            .map(|_| ObstacleLabel::FalsePositive);
        marked.chain(fps).collect()
    }
}

/// Labels every marked and detected obstacle of a frame.
pub fn match_frame(
    annotation: &FrameAnnotation,
    detections: &[DetectedObstacle],
    cfg: &MatchConfig,
    rig: &CameraRig,
) -> FrameLabels {
    // detections sorted by left edge; a marked rectangle can only meet the
    // prefix whose left edge is not past its right edge
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| detections[a].rect.u0.total_cmp(&detections[b].rect.u0).then(a.cmp(&b)));

    let mut det_matches: Vec<Vec<usize>> = vec![Vec::new(); detections.len()];
    let mut marked = Vec::with_capacity(annotation.marked.len());
    for (mi, m) in annotation.marked.iter().enumerate() {
        let end = order.partition_point(|&i| detections[i].rect.u0 <= m.rect_px.u1);
        let mut matched: Vec<usize> = order[..end]
            .iter()
            .copied()
            .filter(|&di| pair_matches(m, &detections[di], cfg))
            .collect();
        matched.sort_unstable();
        for &di in &matched {
            det_matches[di].push(mi);
        }
        let label = if matched.is_empty() {
            ObstacleLabel::FalseNegative
        } else {
            ObstacleLabel::TruePositive
        };
        marked.push(MarkedLabel {
            label,
            matched,
            in_corridor: in_corridor(m.lateral_span(rig), m.z_ref_m, &annotation.corridor),
        });
    }

    let detected = detections
        .iter()
        .zip(det_matches)
        .map(|(d, partners)| {
            let class = if !partners.is_empty() {
                DetectedClass::Supporting(partners)
            } else if annotation.indifference.iter().any(|z| z.intersects_rect(&d.rect)) {
                DetectedClass::Absorbed
            } else {
                DetectedClass::FalsePositive
            };
            DetectedLabel {
                class,
                in_corridor: in_corridor(d.x_span, d.z_exp, &annotation.corridor),
            }
        })
        .collect();

    FrameLabels { marked, detected }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StopVerdict {
    TruePositiveStop,
    FalsePositiveStop,
    FalseNegativeStop,
    TrueNegative,
}

impl StopVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopVerdict::TruePositiveStop => "TruePositiveStop",
            StopVerdict::FalsePositiveStop => "FalsePositiveStop",
            StopVerdict::FalseNegativeStop => "FalseNegativeStop",
            StopVerdict::TrueNegative => "TrueNegative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            StopVerdict::TruePositiveStop,
            StopVerdict::FalsePositiveStop,
            StopVerdict::FalseNegativeStop,
            StopVerdict::TrueNegative,
        ]
        .into_iter()
        .find(|v| v.as_str() == s)
    }
}

impl fmt::Display for StopVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn classify_stop(corridor_labels: &[ObstacleLabel]) -> StopVerdict {
    let has = |l| corridor_labels.contains(&l);
    if has(ObstacleLabel::TruePositive) {
        StopVerdict::TruePositiveStop
    } else if has(ObstacleLabel::FalseNegative) {
        StopVerdict::FalseNegativeStop
    } else if has(ObstacleLabel::FalsePositive) {
        StopVerdict::FalsePositiveStop
    } else {
        StopVerdict::TrueNegative
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    pub frame_id: String,
    pub labels: FrameLabels,
    pub verdict: StopVerdict,
    pub n_tp: usize,
    pub n_fp: usize,
    pub n_fn: usize,
}

/// Matches, filters by corridor and classifies one frame.
pub fn evaluate_frame(
    annotation: &FrameAnnotation,
    detections: &[DetectedObstacle],
    cfg: &MatchConfig,
    rig: &CameraRig,
) -> FrameResult {
    let labels = match_frame(annotation, detections, cfg, rig);
    let corridor = labels.corridor_labels();
    let count = |l| corridor.iter().filter(|&&x| x == l).count();
    FrameResult {
        frame_id: annotation.frame_id.clone(),
        verdict: classify_stop(&corridor),
        n_tp: count(ObstacleLabel::TruePositive),
        n_fp: count(ObstacleLabel::FalsePositive),
        n_fn: count(ObstacleLabel::FalseNegative),
        labels,
    }
}

/// A ratio that may have an empty denominator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rate {
    Value(f64),
    Undefined,
}

impl Rate {
    pub fn ratio(num: usize, den: usize) -> Rate {
        if den == 0 {
            Rate::Undefined
        } else {
            Rate::Value(num as f64 / den as f64)
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Rate::Value(v) => Some(*v),
            Rate::Undefined => None,
        }
    }

    pub fn parse(s: &str) -> Option<Rate> {
        if s == "undefined" {
            return Some(Rate::Undefined);
        }
        s.parse::<f64>().ok().filter(|v| (0.0..=1.0).contains(v)).map(Rate::Value)
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Value(v) => write!(f, "{v}"),
            Rate::Undefined => f.write_str("undefined"),
        }
    }
}

/// JSON form: a number, or the string `"undefined"`.
impl Serialize for Rate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Rate::Value(v) => s.serialize_f64(*v),
            Rate::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) if (0.0..=1.0).contains(&v) => Ok(Rate::Value(v)),
            Raw::Text(t) if t == "undefined" => Ok(Rate::Undefined),
            _ => Err(serde::de::Error::custom("rate must be in [0, 1] or \"undefined\"")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictCounts {
    pub true_positive_stops: usize,
    pub false_positive_stops: usize,
    pub false_negative_stops: usize,
    pub true_negatives: usize,
}

impl VerdictCounts {
    pub fn add(&mut self, v: StopVerdict) {
        match v {
            StopVerdict::TruePositiveStop => self.true_positive_stops += 1,
            StopVerdict::FalsePositiveStop => self.false_positive_stops += 1,
            StopVerdict::FalseNegativeStop => self.false_negative_stops += 1,
            StopVerdict::TrueNegative => self.true_negatives += 1,
        }
    }

    pub fn merge(self, o: VerdictCounts) -> VerdictCounts {
        VerdictCounts {
            true_positive_stops: self.true_positive_stops + o.true_positive_stops,
            false_positive_stops: self.false_positive_stops + o.false_positive_stops,
            false_negative_stops: self.false_negative_stops + o.false_negative_stops,
            true_negatives: self.true_negatives + o.true_negatives,
        }
    }

    pub fn total(&self) -> usize {
        self.true_positive_stops + self.false_positive_stops + self.false_negative_stops + self.true_negatives
    }

    pub fn tpr(&self) -> Rate {
        Rate::ratio(self.true_positive_stops, self.true_positive_stops + self.false_negative_stops)
    }

    pub fn fpr(&self) -> Rate {
        Rate::ratio(self.false_positive_stops, self.false_positive_stops + self.true_negatives)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tpr: Rate,
    pub fpr: Rate,
    pub counts: VerdictCounts,
}

impl Summary {
    pub fn from_counts(counts: VerdictCounts) -> Summary {
        Summary {
            tpr: counts.tpr(),
            fpr: counts.fpr(),
            counts,
        }
    }
}

/// Stop rates over a dataset: TPR over frames that required a stop, FPR
/// over frames that did not.
pub fn aggregate(verdicts: impl IntoIterator<Item = StopVerdict>) -> Result<Summary> {
    let mut counts = VerdictCounts::default();
    for v in verdicts {
        counts.add(v);
    }
    if counts.total() == 0 {
        return Err(Error::invalid("cannot aggregate an empty result list"));
    }
    Ok(Summary::from_counts(counts))
}
