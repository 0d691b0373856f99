//! `roadstop` command implementations.
//!
//! Every command returns the text it would print on stdout; `main` only
//! parses arguments, owns the worker pool and maps errors to exit codes.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use roadstop_core::dataset::{self, evaluate_dataset, evaluate_detections, Dataset, DatasetManifest, SuiteDocument};
use roadstop_core::detector::ObstacleRecord;
use roadstop_core::report::{self, FrameReport, Selection};
use roadstop_core::sweep::{pareto_frontier, run_sweep, select_operating_point, SweepConfig, SweepOptions, SweepPoint};
use roadstop_core::{io, CameraRig, Error, PipelineParams, Summary};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_USAGE,
            Error::Invariant(_) => EXIT_INVARIANT,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "roadstop", version, about = "Stereo obstacle detection and stop-decision evaluation")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: Option<u16>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a scene suite into a dataset directory.
    Generate(GenerateArgs),
    /// Write per-frame detections as JSON.
    Detect(DetectArgs),
    /// Evaluate stop decisions on a dataset.
    Evaluate(EvaluateArgs),
    /// Grid-search parameters; writes sweep, frontier and selected point.
    Sweep(SweepArgs),
    /// Re-read a frame or sweep report and print it in another form.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scene suite JSON.
    pub suite: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Calibration JSON for rendering (default: the suite's, else the reference rig).
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Render the reference rig downscaled by this integer factor.
    #[arg(long, default_value_t = 1)]
    pub downscale: usize,
    /// Seed for the suite's random recipe.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Options shared by the commands that run the pipeline.
#[derive(Debug, Args, Clone, Default)]
pub struct PipelineArgs {
    /// Dataset manifest (or its directory).
    pub manifest: PathBuf,
    /// Pipeline parameters JSON.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Parameter override, e.g. `detector.cutoff_height_m=0.2` (repeatable).
    #[arg(long = "set", value_name = "K=V")]
    pub set: Vec<String>,
    /// Calibration JSON replacing the dataset's.
    #[arg(long)]
    pub calib: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Output directory for `<frame_id>.json` files.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Per-frame report path (default: print the report).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Use detections written by `detect` instead of running the detector.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Only evaluate frames with this tag.
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep configuration JSON.
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset manifest (default: the config's `dataset`, relative to the config).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Base parameters JSON replacing the config's `base_params`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long = "set", value_name = "K=V")]
    pub set: Vec<String>,
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Overrides the config's FPR bound.
    #[arg(long)]
    pub max_fpr: Option<f64>,
    /// Recompute depth for every grid point.
    #[arg(long)]
    pub no_cache: bool,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A per-frame report (CSV or JSON) or a sweep CSV/JSON.
    pub input: PathBuf,
    /// FPR bound for operating point selection on sweep input.
    #[arg(long, default_value_t = 0.02)]
    pub max_fpr: f64,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
    .map_err(CliError::from)
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    Ok(io::write_bytes(path, text.as_bytes())?)
}

/// Base parameters, then a parameters file, then `--set` overrides.
pub fn load_params(base: PipelineParams, file: Option<&Path>, sets: &[String]) -> CliResult<PipelineParams> {
    let mut p = match file {
        Some(path) => PipelineParams::from_json_str(&read_text(path)?, &path.display().to_string())?,
        None => base,
    };
    for s in sets {
        p = p.with_override(s).map_err(|e| CliError::usage(format!("--set {s}: {e}")))?;
    }
    p.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(p)
}

pub fn summary_line(s: &Summary) -> String {
    let c = &s.counts;
    format!(
        "TPR {} FPR {} (tp_stops {}, fp_stops {}, fn_stops {}, true_negatives {})",
        s.tpr, s.fpr, c.true_positive_stops, c.false_positive_stops, c.false_negative_stops, c.true_negatives
    )
}

pub fn cmd_generate(args: &GenerateArgs) -> CliResult<(DatasetManifest, String)> {
    let origin = args.suite.display().to_string();
    let mut doc = SuiteDocument::parse(&read_text(&args.suite)?, &origin)?;
    if let Some(seed) = args.seed {
        match doc.random.as_mut() {
            Some(r) => r.seed = seed,
            None => return Err(CliError::usage("--seed needs a suite with a \"random\" recipe")),
        }
    }
    if args.downscale == 0 {
        return Err(CliError::usage("--downscale must be at least 1"));
    }
    let default_rig = match &args.calib {
        Some(p) => {
            doc.calibration = None;
            CameraRig::from_json_str(&read_text(p)?, &p.display().to_string())?
        }
        None => CameraRig::reference_scaled(args.downscale),
    };
    let manifest = dataset::generate_from_suite(&doc, &default_rig, &args.out)?;
    let msg = format!("wrote {} frames to {}\n", manifest.frames.len(), args.out.display());
    Ok((manifest, msg))
}

fn load_dataset(p: &PipelineArgs) -> CliResult<Dataset> {
    Ok(Dataset::load(&p.manifest, p.calib.as_deref())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFile {
    pub frame_id: String,
    pub obstacles: Vec<ObstacleRecord>,
}

pub fn cmd_detect(args: &DetectArgs) -> CliResult<String> {
    let ds = load_dataset(&args.pipeline)?;
    let params = load_params(PipelineParams::default(), args.pipeline.params.as_deref(), &args.pipeline.set)?;
    ds.check_inputs(&params)?;
    let files: Vec<CliResult<DetectionFile>> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let obstacles = ds.detect_frame(i, &params)?;
            Ok(DetectionFile {
                frame_id: ds.frame(i).id.clone(),
                obstacles: obstacles.iter().map(ObstacleRecord::from).collect(),
            })
        })
        .collect();
    let mut total = 0;
    for f in files {
        let f = f?;
        total += f.obstacles.len();
        let mut text = serde_json::to_string_pretty(&f).expect("serializable");
        text.push('\n');
        write_text(&args.out.join(format!("{}.json", f.frame_id)), &text)?;
    }
    Ok(format!("{total} obstacles in {} frames\n", ds.len()))
}

fn read_detections(ds: &Dataset, dir: &Path) -> CliResult<Vec<Vec<roadstop_core::detector::DetectedObstacle>>> {
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(ds.len());
    for i in 0..ds.len() {
        let id = &ds.frame(i).id;
        let path = dir.join(format!("{id}.json"));
        if !path.is_file() {
            missing.push(id.clone());
            continue;
        }
        let origin = path.display().to_string();
        let file: DetectionFile =
            serde_json::from_str(&read_text(&path)?).map_err(|e| CliError::from(Error::Format {
                path: origin.clone(),
                message: e.to_string(),
            }))?;
        if &file.frame_id != id {
            return Err(Error::Format {
                path: origin,
                message: format!("frame_id '{}' does not match file name", file.frame_id),
            }
            .into());
        }
        let obstacles = file
            .obstacles
            .into_iter()
            .map(|r| r.into_obstacle())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::from(Error::Format {
                path: origin.clone(),
                message: e.to_string(),
            }))?;
        out.push(obstacles);
    }
    if !missing.is_empty() {
        return Err(Error::MissingFrames(missing).into());
    }
    Ok(out)
}

fn render_frame_report(report: &FrameReport, format: Format) -> String {
    match format {
        Format::Csv => report::frame_report_csv(report),
        Format::Json => report::frame_report_json(report),
    }
}

/// Returns the dataset summary and the stdout text.
pub fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<(Summary, String)> {
    let ds = load_dataset(&args.pipeline)?;
    let params = load_params(PipelineParams::default(), args.pipeline.params.as_deref(), &args.pipeline.set)?;
    let eval = match (&args.detections, &args.tag) {
        (Some(dir), None) => evaluate_detections(&ds, &read_detections(&ds, dir)?)?,
        (Some(_), Some(_)) => return Err(CliError::usage("--tag cannot be combined with --detections")),
        (None, tag) => {
            let subset = tag.as_ref().map(|t| ds.frames_tagged(t));
            evaluate_dataset(&ds, &params, subset.as_deref())?
        }
    };
    let report = FrameReport::from(&eval);
    let text = render_frame_report(&report, args.format);
    let out = match &args.report {
        Some(path) => {
            write_text(path, &text)?;
            format!("{}\n", summary_line(&eval.summary))
        }
        None => text,
    };
    Ok((eval.summary, out))
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    pub frontier: Vec<SweepPoint>,
    pub selection: Selection,
}

fn render_points(points: &[SweepPoint], format: Format) -> String {
    match format {
        Format::Csv => report::sweep_csv(points),
        Format::Json => report::sweep_json(points),
    }
}

fn extension(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<(SweepOutcome, String)> {
    let origin = args.config.display().to_string();
    let cfg = SweepConfig::parse(&read_text(&args.config)?, &origin)?;
    // fail on bad axes before touching the dataset
    let grid = cfg.grid()?;
    let manifest = match (&args.manifest, &cfg.dataset) {
        (Some(m), _) => m.clone(),
        (None, Some(d)) => {
            let d = Path::new(d);
            if d.is_absolute() {
                d.to_path_buf()
            } else {
                args.config.parent().unwrap_or(Path::new("")).join(d)
            }
        }
        (None, None) => return Err(CliError::usage("no dataset: pass --manifest or set \"dataset\" in the config")),
    };
    let max_fpr = args.max_fpr.unwrap_or(cfg.max_fpr);
    if !(0.0..=1.0).contains(&max_fpr) {
        return Err(CliError::usage(format!("max_fpr must lie in [0, 1], got {max_fpr}")));
    }
    let base = load_params(cfg.base_params, args.params.as_deref(), &args.set)?;
    let ds = Dataset::load(&manifest, args.calib.as_deref())?;
    let points = run_sweep(
        &ds,
        &grid,
        &base,
        SweepOptions {
            cache_depth: !args.no_cache,
        },
    )?;
    let frontier = pareto_frontier(&points);
    let selection = Selection::new(max_fpr, select_operating_point(&points, max_fpr));

    let ext = extension(args.format);
    write_text(&args.out.join(format!("sweep.{ext}")), &render_points(&points, args.format))?;
    write_text(&args.out.join(format!("frontier.{ext}")), &render_points(&frontier, args.format))?;
    write_text(&args.out.join("selected.json"), &selection.to_json())?;

    let mut msg = format!("{} grid points, {} on the frontier\n", points.len(), frontier.len());
    if frontier.is_empty() {
        msg.push_str("warning: no point has both rates defined; frontier is empty\n");
    }
    match &selection.summary {
        Some(s) => msg.push_str(&format!("selected (FPR <= {max_fpr}): {}\n", summary_line(s))),
        None => msg.push_str(&format!("no feasible point with FPR <= {max_fpr}\n")),
    }
    Ok((
        SweepOutcome {
            points,
            frontier,
            selection,
        },
        msg,
    ))
}

pub fn cmd_report(args: &ReportArgs) -> CliResult<String> {
    let origin = args.input.display().to_string();
    let text = read_text(&args.input)?;
    let trimmed = text.trim_start();
    if trimmed.starts_with("frame_id,") {
        let r = report::parse_frame_report_csv(&text, &origin)?;
        return Ok(render_frame_report(&r, args.format));
    }
    if trimmed.starts_with('{') {
        let r = report::parse_frame_report_json(&text, &origin)?;
        return Ok(render_frame_report(&r, args.format));
    }
    let points = if trimmed.starts_with('[') {
        report::parse_sweep_json(&text, &origin)?
    } else {
        report::parse_sweep_csv(&text, &origin)?
    };
    let frontier = pareto_frontier(&points);
    let selection = Selection::new(args.max_fpr, select_operating_point(&points, args.max_fpr));
    Ok(match args.format {
        Format::Csv => report::sweep_csv(&frontier),
        Format::Json => {
            let v = serde_json::json!({
                "frontier": serde_json::from_str::<serde_json::Value>(&report::sweep_json(&frontier)).expect("valid json"),
                "selection": serde_json::from_str::<serde_json::Value>(&selection.to_json()).expect("valid json"),
            });
            let mut s = serde_json::to_string_pretty(&v).expect("serializable");
            s.push('\n');
            s
        }
    })
}

/// Runs a parsed command line inside a pool of `--jobs` workers.
pub fn run(cli: &Cli) -> CliResult<String> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        builder = builder.num_threads(j as usize);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::usage(format!("cannot start {} workers: {e}", cli.jobs.unwrap_or(0))))?;
    pool.install(|| match &cli.command {
        Command::Generate(a) => cmd_generate(a).map(|(_, s)| s),
        Command::Detect(a) => cmd_detect(a),
        Command::Evaluate(a) => cmd_evaluate(a).map(|(_, s)| s),
        Command::Sweep(a) => cmd_sweep(a).map(|(_, s)| s),
        Command::Report(a) => cmd_report(a),
    })
}

/// Full entry point: arguments in, (exit code, stdout, stderr) out.
pub fn run_args<I, T>(args: I) -> (i32, String, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            return if code == 0 {
                (0, text, String::new())
            } else {
                (code, String::new(), text)
            };
        }
    };
    match run(&cli) {
        Ok(out) => (0, out, String::new()),
        Err(e) => (e.code, String::new(), format!("error: {e}\n")),
    }
}
