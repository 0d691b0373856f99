//! Pipeline configuration and dotted-key access to its fields.
//!
//! Keys look like `stereo.block_size` or `detector.cutoff_height_m`; a bare
//! field name is accepted when it is unique.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::detector::DetectorParams;
use crate::error::{Error, Result};
use crate::stereo::StereoParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthSource {
    /// Block matching on the left/right images.
    Stereo,
    /// The frame's depth map file.
    Depth,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineParams {
    pub stereo: StereoParams,
    pub detector: DetectorParams,
    pub depth_source: DepthSource,
    /// Depths beyond this are dropped before detection, meters.
    pub far_clip_m: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            stereo: StereoParams::default(),
            detector: DetectorParams::default(),
            depth_source: DepthSource::Stereo,
            far_clip_m: 50.0,
        }
    }
}

/// A scalar parameter value.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
}

impl ParamValue {
    /// Interprets command-line text: booleans, integers, floats, else text.
    pub fn parse(raw: &str) -> ParamValue {
        let raw = raw.trim();
        match raw {
            "true" => return ParamValue::Bool(true),
            "false" => return ParamValue::Bool(false),
            _ => {}
        }
        if let Ok(i) = raw.parse::<i64>() {
            return ParamValue::Int(i);
        }
        if let Ok(f) = raw.parse::<f64>() {
            return ParamValue::Float(f);
        }
        ParamValue::Text(raw.trim_matches('"').to_string())
    }

    pub fn from_json(v: &Value) -> Result<ParamValue> {
        Ok(match v {
            Value::Bool(b) => ParamValue::Bool(*b),
            Value::Number(n) => match n.as_i64() {
                Some(i) => ParamValue::Int(i),
                None => ParamValue::Float(n.as_f64().ok_or_else(|| Error::Config(format!("unsupported number {n}")))?),
            },
            Value::String(s) => ParamValue::Text(s.clone()),
            other => return Err(Error::Config(format!("parameter values must be scalars, got {other}"))),
        })
    }

    pub fn to_json(&self) -> Value {
        match self {
            ParamValue::Bool(b) => Value::Bool(*b),
            ParamValue::Int(i) => Value::from(*i),
            ParamValue::Float(f) => serde_json::Number::from_f64(*f).map(Value::Number).unwrap_or(Value::Null),
            ParamValue::Text(s) => Value::String(s.clone()),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            ParamValue::Bool(_) => 0,
            ParamValue::Int(_) | ParamValue::Float(_) => 1,
            ParamValue::Text(_) => 2,
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Total order: booleans, then numbers by value, then text.
    pub fn total_cmp(&self, other: &ParamValue) -> Ordering {
        match (self, other) {
            (ParamValue::Bool(a), ParamValue::Bool(b)) => a.cmp(b),
            (ParamValue::Text(a), ParamValue::Text(b)) => a.cmp(b),
            (ParamValue::Int(a), ParamValue::Int(b)) => a.cmp(b),
            _ => match (self.as_f64(), other.as_f64()) {
                (Some(a), Some(b)) => a.total_cmp(&b),
                _ => self.rank().cmp(&other.rank()),
            },
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x:?}"),
            ParamValue::Text(s) => f.write_str(s),
        }
    }
}

/// Lexicographic order of two flattened parameter lists.
pub fn compare_assignments(a: &[(String, ParamValue)], b: &[(String, ParamValue)]) -> Ordering {
    for ((ka, va), (kb, vb)) in a.iter().zip(b) {
        let o = ka.cmp(kb).then_with(|| va.total_cmp(vb));
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

fn flatten_into(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, child, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

fn lookup_mut<'a>(root: &'a mut Value, key: &str) -> Option<&'a mut Value> {
    key.split('.').try_fold(root, |node, part| node.as_object_mut()?.get_mut(part))
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        self.stereo.validate()?;
        self.detector.validate()?;
        if !(self.far_clip_m > 0.0) {
            return Err(Error::invalid(format!("far_clip_m must be positive, got {}", self.far_clip_m)));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str, origin: &str) -> Result<Self> {
        let p: PipelineParams = serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
        p.validate().map_err(|e| Error::format(origin, e.to_string()))?;
        Ok(p)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("params serialize")
    }

    fn to_value(self) -> Value {
        serde_json::to_value(self).expect("params serialize")
    }

    /// Every key, in canonical (sorted) order.
    pub fn keys() -> Vec<String> {
        let mut flat = Vec::new();
        flatten_into("", &PipelineParams::default().to_value(), &mut flat);
        flat.into_iter().map(|(k, _)| k).collect()
    }

    /// Canonical key for a full dotted key or a unique bare field name.
    pub fn resolve_key(name: &str) -> Result<String> {
        let keys = PipelineParams::keys();
        if keys.iter().any(|k| k == name) {
            return Ok(name.to_string());
        }
        let matches: Vec<&String> = keys
            .iter()
            .filter(|k| k.rsplit('.').next() == Some(name))
            .collect();
        match matches.as_slice() {
            [one] => Ok((*one).clone()),
            [] => Err(Error::Config(format!(
                "unknown parameter '{name}'; known parameters: {}",
                keys.join(", ")
            ))),
            _ => Err(Error::Config(format!("ambiguous parameter '{name}'"))),
        }
    }

    /// All parameters as (key, value), canonical order.
    pub fn flatten(&self) -> Vec<(String, ParamValue)> {
        let mut flat = Vec::new();
        flatten_into("", &self.to_value(), &mut flat);
        flat.into_iter()
            .map(|(k, v)| (k, ParamValue::from_json(&v).expect("params are scalars")))
            .collect()
    }

    pub fn get(&self, key: &str) -> Result<ParamValue> {
        let key = PipelineParams::resolve_key(key)?;
        let mut v = self.to_value();
        let node = lookup_mut(&mut v, &key).expect("resolved key exists");
        ParamValue::from_json(node)
    }

    /// Copy with one field replaced. The result is not validated.
    pub fn with(&self, key: &str, value: &ParamValue) -> Result<PipelineParams> {
        let key = PipelineParams::resolve_key(key)?;
        let mut root = self.to_value();
        let node = lookup_mut(&mut root, &key).expect("resolved key exists");
        let mut new = value.to_json();
        // 3.0 for an integer field
        if let (true, ParamValue::Float(f)) = (node.is_u64() || node.is_i64(), value) {
            if f.fract() == 0.0 && f.abs() < 9e15 {
                new = Value::from(*f as i64);
            }
        }
        *node = new;
        serde_json::from_value(root).map_err(|e| Error::Config(format!("{key} = {value}: {e}")))
    }

    /// Applies a `key=value` override.
    pub fn with_override(&self, spec: &str) -> Result<PipelineParams> {
        let (key, raw) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{spec}' is not of the form key=value")))?;
        self.with(key.trim(), &ParamValue::parse(raw))
    }

    /// Key for the depth-producing part of the pipeline: two parameter sets
    /// with equal keys produce identical depth maps.
    pub fn depth_key(&self) -> String {
        match self.depth_source {
            DepthSource::Stereo => format!(
                "stereo|{}|{}",
                serde_json::to_string(&self.stereo).expect("serializes"),
                self.far_clip_m
            ),
            DepthSource::Depth => format!("depth|{}", self.far_clip_m),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_cover_both_stages() {
        let keys = PipelineParams::keys();
        assert!(keys.contains(&"stereo.block_size".to_string()));
        assert!(keys.contains(&"detector.tilt_allowance_deg".to_string()));
        assert!(keys.contains(&"depth_source".to_string()));
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn bare_names_resolve() {
        assert_eq!(PipelineParams::resolve_key("block_size").unwrap(), "stereo.block_size");
        assert_eq!(
            PipelineParams::resolve_key("detector.cell_size_m").unwrap(),
            "detector.cell_size_m"
        );
        assert!(matches!(PipelineParams::resolve_key("blok_size"), Err(Error::Config(_))));
    }

    #[test]
    fn overrides() {
        let p = PipelineParams::default();
        let q = p.with_override("stereo.block_size=11").unwrap();
        assert_eq!(q.stereo.block_size, 11);
        let q = q.with_override("cutoff_height_m=0.25").unwrap();
        assert_eq!(q.detector.cutoff_height_m, 0.25);
        let q = q.with_override("depth_source=depth").unwrap();
        assert_eq!(q.depth_source, DepthSource::Depth);
        let q = q.with("max_disparity", &ParamValue::Float(64.0)).unwrap();
        assert_eq!(q.stereo.max_disparity, 64);
        assert!(p.with_override("subpixel=maybe").is_err());
        assert!(p.with_override("block_size").is_err());
        assert_eq!(q.get("block_size").unwrap(), ParamValue::Int(11));
    }

    #[test]
    fn flatten_round_trips_through_with() {
        let p = PipelineParams::default()
            .with_override("uniqueness_ratio=0.2")
            .unwrap();
        let mut q = PipelineParams::default();
        for (k, v) in p.flatten() {
            q = q.with(&k, &v).unwrap();
        }
        assert_eq!(p, q);
    }

    #[test]
    fn value_parsing_and_order() {
        assert_eq!(ParamValue::parse("3"), ParamValue::Int(3));
        assert_eq!(ParamValue::parse("0.5"), ParamValue::Float(0.5));
        assert_eq!(ParamValue::parse("true"), ParamValue::Bool(true));
        assert_eq!(ParamValue::parse("depth"), ParamValue::Text("depth".into()));
        assert_eq!(ParamValue::Int(2).total_cmp(&ParamValue::Float(2.5)), Ordering::Less);
        assert_eq!(ParamValue::Float(0.1).to_string(), "0.1");
        assert_eq!(ParamValue::Float(1.0).to_string(), "1.0");
    }

    #[test]
    fn unknown_field_in_file_is_rejected() {
        let err = PipelineParams::from_json_str(r#"{"stereo": {"blok": 3}}"#, "p.json").unwrap_err();
        assert!(err.to_string().contains("blok"), "{err}");
    }
}
