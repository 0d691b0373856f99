//! On-disk datasets: manifest, calibration, annotations and per-frame files.
//!
//! ```text
//! <root>/manifest.json
//! <root>/calib.json
//! <root>/annotations.json
//! <root>/frames/<id>_left.pgm, <id>_right.pgm, <id>_depth.pfm, ...
//! ```
//! Paths inside the manifest are relative to its directory unless absolute.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{depth_to_points, detect_points, DetectedObstacle};
use crate::error::{Error, Result};
use crate::evaluator::{
    aggregate, evaluate_frame, DrivingCorridor, FrameAnnotation, FrameResult, IndifferenceZone, MarkedObstacle,
    MatchConfig, Summary,
};
use crate::geometry::CameraRig;
use crate::image::{DepthMap, ImageGray};
use crate::io;
use crate::params::{DepthSource, PipelineParams};
use crate::stereo::{disparity_to_depth, match_block};
use crate::synth::{self, RandomSuite, SuiteEntry};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CALIBRATION_FILE: &str = "calib.json";
pub const ANNOTATIONS_FILE: &str = "annotations.json";

pub const TAG_REFLECTIVE: &str = "reflective";
pub const TAG_LOW_TEXTURE: &str = "low_texture";
pub const TAG_NOISY: &str = "noisy";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Provenance {
    Generated {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Recorded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    /// Ground-truth disparity of the left view (generated datasets).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_disparity: Option<String>,
    /// 8-bit mask, nonzero where the left pixel is visible to the right camera.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub non_occluded: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

impl FrameEntry {
    fn files(&self) -> impl Iterator<Item = &String> {
        [
            &self.left,
            &self.right,
            &self.depth,
            &self.true_disparity,
            &self.non_occluded,
        ]
        .into_iter()
        .flatten()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub calibration: String,
    pub annotations: String,
    pub provenance: Provenance,
    pub frames: Vec<FrameEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameAnnotationRecord {
    pub frame_id: String,
    #[serde(default)]
    pub marked: Vec<MarkedObstacle>,
    #[serde(default)]
    pub indifference: Vec<IndifferenceZone>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationFile {
    #[serde(default)]
    pub corridor: DrivingCorridor,
    #[serde(default, rename = "match")]
    pub match_config: MatchConfig,
    pub frames: Vec<FrameAnnotationRecord>,
}

impl AnnotationFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let file: AnnotationFile = serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
        let ctx = |e: Error| Error::format(origin, e.to_string());
        file.corridor.validate().map_err(ctx)?;
        file.match_config.validate().map_err(ctx)?;
        for f in &file.frames {
            for (i, m) in f.marked.iter().enumerate() {
                m.validate()
                    .map_err(|e| Error::format(origin, format!("frame {} marked[{i}]: {e}", f.frame_id)))?;
            }
        }
        Ok(file)
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    io::write_bytes(path, text.as_bytes())
}

/// A loaded, validated dataset.
#[derive(Clone, Debug)]
pub struct Dataset {
    root: PathBuf,
    manifest: DatasetManifest,
    rig: CameraRig,
    match_config: MatchConfig,
    annotations: Vec<FrameAnnotation>,
}

impl Dataset {
    /// Loads `manifest_path` (or `<dir>/manifest.json` for a directory).
    /// `calib_override` replaces the manifest's calibration file.
    pub fn load(manifest_path: &Path, calib_override: Option<&Path>) -> Result<Self> {
        let manifest_path = if manifest_path.is_dir() {
            manifest_path.join(MANIFEST_FILE)
        } else {
            manifest_path.to_path_buf()
        };
        let origin = manifest_path.display().to_string();
        let manifest: DatasetManifest =
            serde_json::from_str(&read_text(&manifest_path)?).map_err(|e| Error::json(&origin, e))?;
        let root = manifest_path.parent().map(Path::to_path_buf).unwrap_or_default();
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                root.join(p)
            }
        };

        let mut seen = HashSet::new();
        for f in &manifest.frames {
            if !seen.insert(f.id.as_str()) {
                return Err(Error::format(&origin, format!("duplicate frame id '{}'", f.id)));
            }
        }
        let missing: Vec<String> = manifest
            .frames
            .iter()
            .filter(|f| f.files().any(|p| !resolve(p).is_file()))
            .map(|f| f.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingFrames(missing));
        }

        // an override is looked up under the manifest root first, then as given
        let calib_path = match calib_override {
            Some(p) => {
                let under_root = resolve(&p.to_string_lossy());
                if under_root.is_file() || !p.is_file() {
                    under_root
                } else {
                    p.to_path_buf()
                }
            }
            None => resolve(&manifest.calibration),
        };
        let rig = CameraRig::from_json_str(&read_text(&calib_path)?, &calib_path.display().to_string())?;

        let ann_path = resolve(&manifest.annotations);
        let ann_origin = ann_path.display().to_string();
        let ann = AnnotationFile::parse(&read_text(&ann_path)?, &ann_origin)?;
        let known: HashSet<&str> = manifest.frames.iter().map(|f| f.id.as_str()).collect();
        let mut by_id = std::collections::HashMap::new();
        for rec in &ann.frames {
            if !known.contains(rec.frame_id.as_str()) {
                return Err(Error::format(&ann_origin, format!("annotation for unknown frame '{}'", rec.frame_id)));
            }
            if by_id.insert(rec.frame_id.as_str(), rec).is_some() {
                return Err(Error::format(&ann_origin, format!("duplicate annotation for frame '{}'", rec.frame_id)));
            }
        }
        let unannotated: Vec<&str> = manifest
            .frames
            .iter()
            .filter(|f| !by_id.contains_key(f.id.as_str()))
            .map(|f| f.id.as_str())
            .collect();
        if !unannotated.is_empty() {
            return Err(Error::format(
                &ann_origin,
                format!("frames without annotation: {}", unannotated.join(", ")),
            ));
        }
        let annotations = manifest
            .frames
            .iter()
            .map(|f| {
                let rec = by_id[f.id.as_str()];
                FrameAnnotation {
                    frame_id: f.id.clone(),
                    marked: rec.marked.clone(),
                    indifference: rec.indifference.clone(),
                    corridor: ann.corridor,
                }
            })
            .collect();

        Ok(Dataset {
            root,
            manifest,
            rig,
            match_config: ann.match_config,
            annotations,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn rig(&self) -> &CameraRig {
        &self.rig
    }

    pub fn match_config(&self) -> &MatchConfig {
        &self.match_config
    }

    pub fn len(&self) -> usize {
        self.manifest.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames.is_empty()
    }

    pub fn frame(&self, i: usize) -> &FrameEntry {
        &self.manifest.frames[i]
    }

    pub fn annotation(&self, i: usize) -> &FrameAnnotation {
        &self.annotations[i]
    }

    /// Indices of frames carrying `tag`.
    pub fn frames_tagged(&self, tag: &str) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.frame(i).tags.iter().any(|t| t == tag))
            .collect()
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Checks that every frame has the inputs `params` needs.
    pub fn check_inputs(&self, params: &PipelineParams) -> Result<()> {
        let lacking: Vec<String> = self
            .manifest
            .frames
            .iter()
            .filter(|f| match params.depth_source {
                DepthSource::Stereo => f.left.is_none() || f.right.is_none(),
                DepthSource::Depth => f.depth.is_none(),
            })
            .map(|f| f.id.clone())
            .collect();
        if lacking.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "depth_source {:?} needs files these frames do not have: {}",
                params.depth_source,
                lacking.join(", ")
            )))
        }
    }

    pub fn read_left(&self, i: usize) -> Result<ImageGray> {
        let f = self.frame(i);
        let p = f.left.as_ref().ok_or_else(|| Error::MissingFrames(vec![f.id.clone()]))?;
        io::read_pgm(&self.resolve(p))
    }

    pub fn read_right(&self, i: usize) -> Result<ImageGray> {
        let f = self.frame(i);
        let p = f.right.as_ref().ok_or_else(|| Error::MissingFrames(vec![f.id.clone()]))?;
        io::read_pgm(&self.resolve(p))
    }

    /// Depth map for frame `i` from the configured source, far-clipped.
    pub fn frame_depth(&self, i: usize, params: &PipelineParams) -> Result<DepthMap> {
        let f = self.frame(i);
        let depth = match params.depth_source {
            DepthSource::Stereo => {
                let disp = match_block(&self.read_left(i)?, &self.read_right(i)?, &params.stereo)?;
                disparity_to_depth(&disp, &self.rig, params.far_clip_m)
            }
            DepthSource::Depth => {
                let p = f.depth.as_ref().ok_or_else(|| Error::MissingFrames(vec![f.id.clone()]))?;
                let raw = io::read_depth(&self.resolve(p))?;
                let values = raw
                    .values()
                    .iter()
                    .map(|&z| if z <= params.far_clip_m { z } else { 0.0 })
                    .collect();
                DepthMap::from_values(raw.width(), raw.height(), values)?
            }
        };
        if (depth.width(), depth.height()) != (self.rig.width(), self.rig.height()) {
            return Err(Error::DimensionMismatch(format!(
                "frame {}: {}x{} maps, calibration says {}x{}",
                f.id,
                depth.width(),
                depth.height(),
                self.rig.width(),
                self.rig.height()
            )));
        }
        Ok(depth)
    }

    pub fn detect_frame(&self, i: usize, params: &PipelineParams) -> Result<Vec<DetectedObstacle>> {
        let depth = self.frame_depth(i, params)?;
        Ok(detect_points(&depth_to_points(&depth, &self.rig), &self.rig, &params.detector))
    }
}

/// Per-frame results and their aggregate.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub frames: Vec<FrameResult>,
    pub summary: Summary,
}

/// Runs detection and evaluation on the selected frames (all when `None`),
/// frame-parallel, results in dataset order.
pub fn evaluate_dataset(ds: &Dataset, params: &PipelineParams, frames: Option<&[usize]>) -> Result<Evaluation> {
    params.validate()?;
    ds.check_inputs(params)?;
    let all: Vec<usize>;
    let indices = match frames {
        Some(f) => f,
        None => {
            all = (0..ds.len()).collect();
            &all
        }
    };
    let results: Vec<Result<FrameResult>> = indices
        .par_iter()
        .map(|&i| {
            let detections = ds.detect_frame(i, params)?;
            Ok(evaluate_frame(ds.annotation(i), &detections, ds.match_config(), ds.rig()))
        })
        .collect();
    let frames = results.into_iter().collect::<Result<Vec<_>>>()?;
    finish(frames)
}

/// Evaluates precomputed detections, one list per dataset frame.
pub fn evaluate_detections(ds: &Dataset, detections: &[Vec<DetectedObstacle>]) -> Result<Evaluation> {
    if detections.len() != ds.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} detection lists for {} frames",
            detections.len(),
            ds.len()
        )));
    }
    let frames = detections
        .iter()
        .enumerate()
        .map(|(i, d)| evaluate_frame(ds.annotation(i), d, ds.match_config(), ds.rig()))
        .collect();
    finish(frames)
}

fn finish(frames: Vec<FrameResult>) -> Result<Evaluation> {
    let summary = if frames.is_empty() {
        Summary::from_counts(Default::default())
    } else {
        aggregate(frames.iter().map(|f| f.verdict))?
    };
    Ok(Evaluation { frames, summary })
}

/// A scene suite file: either a bare list of entries or a document with
/// explicit scenes, an optional random recipe and dataset-wide settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteDocument {
    #[serde(default)]
    pub scenes: Vec<SuiteEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomSuite>,
    #[serde(default)]
    pub corridor: DrivingCorridor,
    #[serde(default, rename = "match")]
    pub match_config: MatchConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CameraRig>,
    /// Write left/right images and ground-truth disparity besides depth.
    #[serde(default = "yes")]
    pub images: bool,
}

fn yes() -> bool {
    true
}

impl SuiteDocument {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let doc = if text.trim_start().starts_with('[') {
            let scenes: Vec<SuiteEntry> = serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
            SuiteDocument {
                scenes,
                images: true,
                ..SuiteDocument::default()
            }
        } else {
            serde_json::from_str(text).map_err(|e| Error::json(origin, e))?
        };
        for (i, e) in doc.scenes.iter().enumerate() {
            e.validate()
                .map_err(|err| Error::format(origin, format!("scenes[{i}]: {err}")))?;
        }
        if let Some(r) = &doc.random {
            r.validate().map_err(|err| Error::format(origin, format!("random: {err}")))?;
        }
        doc.corridor.validate().map_err(|e| Error::format(origin, e.to_string()))?;
        doc.match_config.validate().map_err(|e| Error::format(origin, e.to_string()))?;
        Ok(doc)
    }

    /// Explicit scenes followed by the drawn random ones.
    pub fn entries(&self) -> Result<Vec<SuiteEntry>> {
        let mut out = self.scenes.clone();
        if let Some(r) = &self.random {
            out.extend(r.build()?);
        }
        Ok(out)
    }
}

/// Renders `entries` into a dataset directory and writes its manifest.
/// Frame files are written frame-parallel; every byte depends only on the
/// inputs.
pub fn generate_dataset(
    entries: &[SuiteEntry],
    rig: &CameraRig,
    corridor: &DrivingCorridor,
    match_config: &MatchConfig,
    provenance: Provenance,
    images: bool,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let ids: Vec<String> = entries
        .iter()
        .enumerate()
        .map(|(i, e)| e.id.clone().unwrap_or_else(|| format!("{i:06}")))
        .collect();
    let mut seen = BTreeSet::new();
    for id in &ids {
        if !seen.insert(id) {
            return Err(Error::invalid(format!("duplicate frame id '{id}' in suite")));
        }
        if id.is_empty() || id.contains(['/', '\\']) {
            return Err(Error::invalid(format!("frame id '{id}' is not a valid file name stem")));
        }
    }
    for e in entries {
        e.validate()?;
    }
    fs::create_dir_all(out_dir.join("frames")).map_err(|e| Error::io(out_dir, e))?;

    let results: Vec<Result<(FrameEntry, FrameAnnotationRecord)>> = entries
        .par_iter()
        .zip(ids.par_iter())
        .map(|(entry, id)| {
            let rendered = synth::render(&entry.scene, rig);
            let depth = synth::corrupt(&rendered, &entry.noise);
            let rel = |suffix: &str| format!("frames/{id}_{suffix}");
            let mut frame = FrameEntry {
                id: id.clone(),
                left: None,
                right: None,
                depth: Some(rel("depth.pfm")),
                true_disparity: None,
                non_occluded: None,
                tags: frame_tags(entry),
            };
            io::write_depth(&out_dir.join(rel("depth.pfm")), &depth)?;
            if images {
                let pair = synth::render_stereo_pair_from(&entry.scene, rig, &rendered);
                let mask = ImageGray::new(
                    rig.width(),
                    rig.height(),
                    pair.non_occluded.iter().map(|&m| if m { 255 } else { 0 }).collect(),
                )?;
                io::write_pgm(&out_dir.join(rel("left.pgm")), &pair.left)?;
                io::write_pgm(&out_dir.join(rel("right.pgm")), &pair.right)?;
                io::write_disparity(&out_dir.join(rel("disparity.pfm")), &pair.true_disparity)?;
                io::write_pgm(&out_dir.join(rel("mask.pgm")), &mask)?;
                frame.left = Some(rel("left.pgm"));
                frame.right = Some(rel("right.pgm"));
                frame.true_disparity = Some(rel("disparity.pfm"));
                frame.non_occluded = Some(rel("mask.pgm"));
            }
            let ann = synth::annotate_rendered(&entry.scene, rig, corridor, &rendered);
            Ok((
                frame,
                FrameAnnotationRecord {
                    frame_id: id.clone(),
                    marked: ann.marked,
                    indifference: ann.indifference,
                },
            ))
        })
        .collect();
    let (frames, records): (Vec<_>, Vec<_>) = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();

    write_json(&out_dir.join(CALIBRATION_FILE), rig)?;
    write_json(
        &out_dir.join(ANNOTATIONS_FILE),
        &AnnotationFile {
            corridor: *corridor,
            match_config: *match_config,
            frames: records,
        },
    )?;
    let manifest = DatasetManifest {
        calibration: CALIBRATION_FILE.into(),
        annotations: ANNOTATIONS_FILE.into(),
        provenance,
        frames,
    };
    write_json(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

fn frame_tags(entry: &SuiteEntry) -> Vec<String> {
    let mut tags = Vec::new();
    if entry.scene.reflective_floor {
        tags.push(TAG_REFLECTIVE.to_string());
    }
    if entry.scene.low_texture {
        tags.push(TAG_LOW_TEXTURE.to_string());
    }
    if !entry.noise.is_identity() {
        tags.push(TAG_NOISY.to_string());
    }
    tags
}

/// Generates a dataset from a parsed suite document.
pub fn generate_from_suite(doc: &SuiteDocument, default_rig: &CameraRig, out_dir: &Path) -> Result<DatasetManifest> {
    let rig = doc.calibration.unwrap_or(*default_rig);
    let seed = doc.random.as_ref().map(|r| r.seed);
    generate_dataset(
        &doc.entries()?,
        &rig,
        &doc.corridor,
        &doc.match_config,
        Provenance::Generated { seed },
        doc.images,
        out_dir,
    )
}
