//! Report files: per-frame evaluation CSV/JSON, sweep CSV, selected point
//! JSON. Every writer has a matching reader.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a
//! report back reproduces the values bit for bit. Wall times are left out of
//! the CSVs to keep them reproducible.

use serde::{Deserialize, Serialize};

use crate::dataset::Evaluation;
use crate::error::{Error, Result};
use crate::evaluator::{Rate, StopVerdict, Summary, VerdictCounts};
use crate::params::{ParamValue, PipelineParams};
use crate::sweep::SweepPoint;

pub const SUMMARY_ROW: &str = "summary";

/// One row of the per-frame report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRow {
    pub frame_id: String,
    pub verdict: StopVerdict,
    pub n_tp: usize,
    pub n_fp: usize,
    pub n_fn: usize,
}

/// Per-frame report contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frames: Vec<FrameRow>,
    pub summary: Summary,
}

impl From<&Evaluation> for FrameReport {
    fn from(e: &Evaluation) -> Self {
        FrameReport {
            frames: e
                .frames
                .iter()
                .map(|f| FrameRow {
                    frame_id: f.frame_id.clone(),
                    verdict: f.verdict,
                    n_tp: f.n_tp,
                    n_fp: f.n_fp,
                    n_fn: f.n_fn,
                })
                .collect(),
            summary: e.summary,
        }
    }
}

fn csv_err(origin: &str, e: csv::Error) -> Error {
    Error::format(origin, e.to_string())
}

fn to_text(wtr: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(wtr.into_inner().expect("in-memory writer")).expect("utf-8")
}

/// Columns `frame_id,verdict,n_tp,n_fp,n_fn,tpr,fpr`; frame rows leave the
/// rate columns empty, the final `summary` row carries the obstacle totals
/// and the dataset rates.
pub fn frame_report_csv(report: &FrameReport) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["frame_id", "verdict", "n_tp", "n_fp", "n_fn", "tpr", "fpr"])
        .expect("in-memory");
    let (mut tp, mut fp, mut fnn) = (0, 0, 0);
    for r in &report.frames {
        tp += r.n_tp;
        fp += r.n_fp;
        fnn += r.n_fn;
        wtr.write_record([
            r.frame_id.as_str(),
            r.verdict.as_str(),
            &r.n_tp.to_string(),
            &r.n_fp.to_string(),
            &r.n_fn.to_string(),
            "",
            "",
        ])
        .expect("in-memory");
    }
    wtr.write_record([
        SUMMARY_ROW,
        "",
        &tp.to_string(),
        &fp.to_string(),
        &fnn.to_string(),
        &report.summary.tpr.to_string(),
        &report.summary.fpr.to_string(),
    ])
    .expect("in-memory");
    to_text(wtr)
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str, line: u64, origin: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(origin, format!("line {line}: bad {what} '{s}'")))
}

pub fn parse_frame_report_csv(text: &str, origin: &str) -> Result<FrameReport> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| csv_err(origin, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["frame_id", "verdict", "n_tp", "n_fp", "n_fn", "tpr", "fpr"] {
        return Err(Error::format(origin, "unexpected header"));
    }
    let mut frames = Vec::new();
    let mut summary = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(origin, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if summary.is_some() {
            return Err(Error::format(origin, format!("line {line}: row after the summary row")));
        }
        if &rec[0] == SUMMARY_ROW {
            let rate = |i: usize, what: &str| {
                Rate::parse(&rec[i]).ok_or_else(|| Error::format(origin, format!("line {line}: bad {what} '{}'", &rec[i])))
            };
            summary = Some((rate(5, "tpr")?, rate(6, "fpr")?));
            continue;
        }
        frames.push(FrameRow {
            frame_id: rec[0].to_string(),
            verdict: StopVerdict::parse(&rec[1])
                .ok_or_else(|| Error::format(origin, format!("line {line}: bad verdict '{}'", &rec[1])))?,
            n_tp: parse_field(&rec[2], "n_tp", line, origin)?,
            n_fp: parse_field(&rec[3], "n_fp", line, origin)?,
            n_fn: parse_field(&rec[4], "n_fn", line, origin)?,
        });
    }
    let (tpr, fpr) = summary.ok_or_else(|| Error::format(origin, "missing summary row"))?;
    let mut counts = VerdictCounts::default();
    for f in &frames {
        counts.add(f.verdict);
    }
    let summary = Summary::from_counts(counts);
    if summary.tpr != tpr || summary.fpr != fpr {
        return Err(Error::format(origin, "summary rates disagree with the frame rows"));
    }
    Ok(FrameReport { frames, summary })
}

pub fn frame_report_json(report: &FrameReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("serializable");
    s.push('\n');
    s
}

pub fn parse_frame_report_json(text: &str, origin: &str) -> Result<FrameReport> {
    serde_json::from_str(text).map_err(|e| Error::json(origin, e))
}

const SWEEP_TAIL: [&str; 6] = ["tpr", "fpr", "tp_stops", "fp_stops", "fn_stops", "true_negatives"];

/// One row per point: every parameter (canonical order), rates, counts.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let keys = PipelineParams::keys();
    wtr.write_record(keys.iter().map(String::as_str).chain(SWEEP_TAIL))
        .expect("in-memory");
    for p in points {
        let c = &p.summary.counts;
        let mut row: Vec<String> = p.params.flatten().into_iter().map(|(_, v)| v.to_string()).collect();
        row.extend([
            p.summary.tpr.to_string(),
            p.summary.fpr.to_string(),
            c.true_positive_stops.to_string(),
            c.false_positive_stops.to_string(),
            c.false_negative_stops.to_string(),
            c.true_negatives.to_string(),
        ]);
        wtr.write_record(&row).expect("in-memory");
    }
    to_text(wtr)
}

/// Reads a sweep CSV. The assignment of each point lists every parameter,
/// since the file does not record which ones were swept.
pub fn parse_sweep_csv(text: &str, origin: &str) -> Result<Vec<SweepPoint>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(origin, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let n = header.len();
    if n < SWEEP_TAIL.len() || header[n - SWEEP_TAIL.len()..] != SWEEP_TAIL {
        return Err(Error::format(origin, "unexpected header"));
    }
    let param_cols = &header[..n - SWEEP_TAIL.len()];
    for k in param_cols {
        PipelineParams::resolve_key(k).map_err(|e| Error::format(origin, e.to_string()))?;
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(origin, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut params = PipelineParams::default();
        let mut assignment = Vec::with_capacity(param_cols.len());
        for (k, raw) in param_cols.iter().zip(rec.iter()) {
            let v = ParamValue::parse(raw);
            params = params
                .with(k, &v)
                .map_err(|e| Error::format(origin, format!("line {line}: {e}")))?;
            assignment.push((k.clone(), params.get(k)?));
        }
        let rate = |i: usize| {
            Rate::parse(&rec[i]).ok_or_else(|| Error::format(origin, format!("line {line}: bad rate '{}'", &rec[i])))
        };
        let base = param_cols.len();
        let counts = VerdictCounts {
            true_positive_stops: parse_field(&rec[base + 2], "tp_stops", line, origin)?,
            false_positive_stops: parse_field(&rec[base + 3], "fp_stops", line, origin)?,
            false_negative_stops: parse_field(&rec[base + 4], "fn_stops", line, origin)?,
            true_negatives: parse_field(&rec[base + 5], "true_negatives", line, origin)?,
        };
        let summary = Summary {
            tpr: rate(base)?,
            fpr: rate(base + 1)?,
            counts,
        };
        if summary != Summary::from_counts(counts) {
            return Err(Error::format(origin, format!("line {line}: rates disagree with counts")));
        }
        out.push(SweepPoint {
            assignment,
            params,
            summary,
            wall_time_s: 0.0,
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepRecord {
    assignment: serde_json::Map<String, serde_json::Value>,
    params: PipelineParams,
    summary: Summary,
}

/// JSON array of points; the assignment becomes an object keyed by
/// parameter, so its order is not preserved.
pub fn sweep_json(points: &[SweepPoint]) -> String {
    let records: Vec<SweepRecord> = points
        .iter()
        .map(|p| SweepRecord {
            assignment: p.assignment.iter().map(|(k, v)| (k.clone(), v.to_json())).collect(),
            params: p.params,
            summary: p.summary,
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&records).expect("serializable");
    s.push('\n');
    s
}

pub fn parse_sweep_json(text: &str, origin: &str) -> Result<Vec<SweepPoint>> {
    let records: Vec<SweepRecord> = serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
    records
        .into_iter()
        .map(|r| {
            let assignment = r
                .assignment
                .iter()
                .map(|(k, v)| Ok((k.clone(), ParamValue::from_json(v)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepPoint {
                assignment,
                params: r.params,
                summary: r.summary,
                wall_time_s: 0.0,
            })
        })
        .collect()
}

/// Result of operating point selection as written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Selection {
    pub max_fpr: f64,
    /// `"selected"` or `"no_feasible_point"`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assignment: Option<serde_json::Map<String, serde_json::Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PipelineParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<Summary>,
}

pub const STATUS_SELECTED: &str = "selected";
pub const STATUS_INFEASIBLE: &str = "no_feasible_point";

impl Selection {
    pub fn new(max_fpr: f64, point: Option<&SweepPoint>) -> Selection {
        match point {
            Some(p) => Selection {
                max_fpr,
                status: STATUS_SELECTED.into(),
                assignment: Some(p.assignment.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()),
                params: Some(p.params),
                summary: Some(p.summary),
            },
            None => Selection {
                max_fpr,
                status: STATUS_INFEASIBLE.into(),
                assignment: None,
                params: None,
                summary: None,
            },
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.status == STATUS_SELECTED
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }

    pub fn parse(text: &str, origin: &str) -> Result<Selection> {
        let s: Selection = serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
        if s.status != STATUS_SELECTED && s.status != STATUS_INFEASIBLE {
            return Err(Error::format(origin, format!("unknown status '{}'", s.status)));
        }
        Ok(s)
    }
}
