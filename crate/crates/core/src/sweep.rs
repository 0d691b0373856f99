//! Grid search over pipeline parameters, Pareto frontier and operating
//! point selection.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::Dataset;
use crate::detector::{depth_to_points, detect_points};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate_frame, Rate, StopVerdict, Summary, VerdictCounts};
use crate::params::{compare_assignments, ParamValue, PipelineParams};

/// Named axes with their values; the Cartesian product is enumerated with
/// the first axis varying slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterGrid {
    axes: Vec<(String, Vec<ParamValue>)>,
}

impl ParameterGrid {
    pub fn new(axes: Vec<(String, Vec<ParamValue>)>) -> Result<Self> {
        let mut resolved: Vec<(String, Vec<ParamValue>)> = Vec::with_capacity(axes.len());
        for (name, values) in axes {
            let key = PipelineParams::resolve_key(&name)?;
            if values.is_empty() {
                return Err(Error::Config(format!("axis '{name}' has no values")));
            }
            if resolved.iter().any(|(k, _)| *k == key) {
                return Err(Error::Config(format!("parameter '{key}' appears on two axes")));
            }
            resolved.push((key, values));
        }
        Ok(ParameterGrid { axes: resolved })
    }

    pub fn from_json_axes(axes: &BTreeMap<String, Vec<Value>>) -> Result<Self> {
        let axes = axes
            .iter()
            .map(|(k, vs)| Ok((k.clone(), vs.iter().map(ParamValue::from_json).collect::<Result<Vec<_>>>()?)))
            .collect::<Result<Vec<_>>>()?;
        ParameterGrid::new(axes)
    }

    pub fn axes(&self) -> &[(String, Vec<ParamValue>)] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every grid element as (key, value) pairs in axis order.
    pub fn assignments(&self) -> Vec<Vec<(String, ParamValue)>> {
        let mut out = vec![Vec::new()];
        for (key, values) in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut a = prefix.clone();
                        a.push((key.clone(), v.clone()));
                        a
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    /// Values of the swept axes.
    pub assignment: Vec<(String, ParamValue)>,
    /// The complete parameter set evaluated.
    pub params: PipelineParams,
    pub summary: Summary,
    /// Share of the sweep's wall time attributed to this point, seconds.
    pub wall_time_s: f64,
}

impl SweepPoint {
    pub fn tpr(&self) -> Rate {
        self.summary.tpr
    }

    pub fn fpr(&self) -> Rate {
        self.summary.fpr
    }

    fn rates(&self) -> Option<(f64, f64)> {
        Some((self.summary.tpr.value()?, self.summary.fpr.value()?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SweepOptions {
    /// Reuse depth maps across points sharing the depth-producing parameters.
    pub cache_depth: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { cache_depth: true }
    }
}

/// Sweep file: axes, constraint, dataset and base parameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axes: BTreeMap<String, Vec<Value>>,
    #[serde(default = "default_max_fpr")]
    pub max_fpr: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default)]
    pub base_params: PipelineParams,
}

fn default_max_fpr() -> f64 {
    0.02
}

impl SweepConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: SweepConfig = serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
        if !(0.0..=1.0).contains(&cfg.max_fpr) {
            return Err(Error::Config(format!("max_fpr must lie in [0, 1], got {}", cfg.max_fpr)));
        }
        Ok(cfg)
    }

    pub fn grid(&self) -> Result<ParameterGrid> {
        ParameterGrid::from_json_axes(&self.axes)
    }
}

/// Evaluates every grid element on the whole dataset.
///
/// Points are grouped by [`PipelineParams::depth_key`]; each group computes
/// a frame's depth and point cloud once and runs every member's detector on
/// it. Frames run in parallel; the output order is the grid order.
pub fn run_sweep(
    ds: &Dataset,
    grid: &ParameterGrid,
    base: &PipelineParams,
    opts: SweepOptions,
) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() {
        return Err(Error::Config("empty parameter grid".into()));
    }
    let assignments = grid.assignments();
    let mut params = Vec::with_capacity(assignments.len());
    for a in &assignments {
        let mut p = *base;
        for (k, v) in a {
            p = p.with(k, v)?;
        }
        p.validate()
            .map_err(|e| Error::Config(format!("grid point {}: {e}", describe(a))))?;
        ds.check_inputs(&p)?;
        params.push(p);
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    if opts.cache_depth {
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        for (i, p) in params.iter().enumerate() {
            let g = *index.entry(p.depth_key()).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
        }
    } else {
        groups = (0..params.len()).map(|i| vec![i]).collect();
    }

    let mut verdicts: Vec<Vec<StopVerdict>> = vec![Vec::with_capacity(ds.len()); params.len()];
    let mut wall = vec![0.0; params.len()];
    for members in &groups {
        let started = Instant::now();
        let lead = &params[members[0]];
        let per_frame: Vec<Result<Vec<StopVerdict>>> = (0..ds.len())
            .into_par_iter()
            .map(|f| {
                let depth = ds.frame_depth(f, lead)?;
                let points = depth_to_points(&depth, ds.rig());
                Ok(members
                    .iter()
                    .map(|&m| {
                        let det = detect_points(&points, ds.rig(), &params[m].detector);
                        evaluate_frame(ds.annotation(f), &det, ds.match_config(), ds.rig()).verdict
                    })
                    .collect())
            })
            .collect();
        for frame in per_frame {
            for (&m, v) in members.iter().zip(frame?) {
                verdicts[m].push(v);
            }
        }
        let share = started.elapsed().as_secs_f64() / members.len() as f64;
        for &m in members {
            wall[m] = share;
        }
    }

    Ok(assignments
        .into_iter()
        .zip(params)
        .zip(verdicts)
        .zip(wall)
        .map(|(((assignment, params), v), wall_time_s)| {
            let mut counts = VerdictCounts::default();
            for x in v {
                counts.add(x);
            }
            SweepPoint {
                assignment,
                params,
                summary: Summary::from_counts(counts),
                wall_time_s,
            }
        })
        .collect())
}

fn describe(a: &[(String, ParamValue)]) -> String {
    a.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(", ")
}

fn params_order(a: &SweepPoint, b: &SweepPoint) -> Ordering {
    compare_assignments(&a.params.flatten(), &b.params.flatten())
}

/// Points not dominated in (higher TPR, lower FPR), sorted by FPR, then TPR,
/// then parameters. Points with an undefined rate are left out.
pub fn pareto_frontier(points: &[SweepPoint]) -> Vec<SweepPoint> {
    let mut defined: Vec<(&SweepPoint, f64, f64)> = points
        .iter()
        .filter_map(|p| p.rates().map(|(t, f)| (p, t, f)))
        .collect();
    defined.sort_by(|a, b| a.2.total_cmp(&b.2).then(b.1.total_cmp(&a.1)));
    let mut out = Vec::new();
    let mut best_before = f64::NEG_INFINITY;
    let mut i = 0;
    while i < defined.len() {
        let fpr = defined[i].2;
        let group_max = defined[i].1;
        let mut j = i;
        while j < defined.len() && defined[j].2 == fpr {
            if defined[j].1 == group_max && group_max > best_before {
                out.push(defined[j].0.clone());
            }
            j += 1;
        }
        best_before = best_before.max(group_max);
        i = j;
    }
    out.sort_by(|a, b| {
        let (ta, fa) = a.rates().expect("defined");
        let (tb, fb) = b.rates().expect("defined");
        fa.total_cmp(&fb).then(ta.total_cmp(&tb)).then_with(|| params_order(a, b))
    });
    out
}

/// Highest TPR with FPR at most `max_fpr`; ties go to the lower FPR, then to
/// the lexicographically smaller parameter set. `None` means no feasible
/// point.
pub fn select_operating_point(points: &[SweepPoint], max_fpr: f64) -> Option<&SweepPoint> {
    points
        .iter()
        .filter(|p| p.rates().is_some_and(|(_, f)| f <= max_fpr))
        .min_by(|a, b| {
            let (ta, fa) = a.rates().expect("filtered");
            let (tb, fb) = b.rates().expect("filtered");
            tb.total_cmp(&ta).then(fa.total_cmp(&fb)).then_with(|| params_order(a, b))
        })
}
