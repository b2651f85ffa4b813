//! Command-line surface: `analyze`, `simulate` and `evaluate`.
//!
//! Exit codes: 0 negative (or success for non-diagnostic commands),
//! 2 borderline, 3 positive, 1 any error. Errors are a single JSON line on
//! stderr: `{"error":"<Kind>","message":"..."}`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::biomech::{SegmentPercents, TrunkModel};
use crate::diagnosis::{Band, Thresholds};
use crate::evaluation::{
    parse_manifest, parse_truth_table, render_table, scale_wd, summarize, EvalSummary, TrialTruth,
};
use crate::filtering::FilterConfig;
use crate::landmark_io::{parse_stream, write_stream_with_meta, LandmarkId, Sex, SubjectMeta, View};
use crate::pipeline::{analyze, report_json, round6, PipelineConfig};
use crate::rwd::{series_csv, AxisMapping, DegeneratePolicy};
use crate::sway_sim::{generate, SwayScenario};

pub const EXIT_ERROR: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "romberg", version, about = "Objective Romberg test analysis of pose landmark streams")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Diagnose one landmark stream.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic stream and its ground truth.
    Simulate(SimulateArgs),
    /// Score the pipeline over a manifest of trials.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SexArg {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ViewArg {
    Front,
    Side,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Skip,
    Fail,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TrunkArg {
    Whole,
    UpperLower,
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Subject sex (overrides the stream's #meta header).
    #[arg(long, value_enum)]
    pub sex: Option<SexArg>,
    /// Camera view (overrides the stream's #meta header).
    #[arg(long, value_enum)]
    pub view: Option<ViewArg>,
    /// Filter config file (TOML: alpha, q, r, filtered_joints, min_visibility).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// EMA smoothing factor for the CoM, in (0, 1].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Kalman process-noise intensity.
    #[arg(long = "kf-q")]
    pub kf_q: Option<f64>,
    /// Kalman measurement-noise variance.
    #[arg(long = "kf-r")]
    pub kf_r: Option<f64>,
    /// Comma-separated joints to Kalman-filter (names or indices), or `none`.
    #[arg(long = "kf-joints")]
    pub kf_joints: Option<String>,
    /// Visibility below which a measurement is ignored.
    #[arg(long = "min-visibility")]
    pub min_visibility: Option<f64>,
    /// Lateral borderline band in percent, `lo,hi`.
    #[arg(long = "lateral-band")]
    pub lateral_band: Option<String>,
    /// Anterior-posterior borderline band in percent, `lo,hi`.
    #[arg(long = "ap-band")]
    pub ap_band: Option<String>,
    /// What to do with frames whose geometry is degenerate.
    #[arg(long = "on-degenerate", value_enum, default_value = "skip")]
    pub on_degenerate: PolicyArg,
    /// Trunk segmentation of the mass model.
    #[arg(long = "trunk-model", value_enum, default_value = "whole")]
    pub trunk_model: TrunkArg,
    /// Replacement segment mass percentages (TOML).
    #[arg(long = "mass-table")]
    pub mass_table: Option<PathBuf>,
    /// In front view, ignore depth and report the lateral axis only.
    #[arg(long = "no-depth")]
    pub no_depth: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Landmark stream file.
    #[arg(long)]
    pub input: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the per-frame series table (CSV) here.
    #[arg(long)]
    pub series: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Directory for `stream.jsonl` and `truth.csv`.
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Trial manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory for `summary.txt` and `summary.json`.
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

/// A failure reported as one JSON line.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
        }
    }

    pub fn to_line(&self) -> String {
        json!({"error": self.kind, "message": self.message}).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    let kind = if e.kind() == std::io::ErrorKind::NotFound {
        "FileNotFound"
    } else {
        "IoError"
    };
    CliError::new(kind, format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| io_error(path, e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read(path)?)
        .map_err(|_| CliError::new("IoError", format!("{}: not UTF-8", path.display())))
}

/// Writes via a sibling temp file and rename so readers never see a partial
/// file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| io_error(path, e))
}

fn parse_band(text: &str, flag: &str) -> Result<Band, CliError> {
    let bad = || CliError::new("InvalidArgument", format!("--{flag} expects `lo,hi`, got `{text}`"));
    let (lo, hi) = text.split_once(',').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    Band::new(lo, hi).map_err(|e| CliError::new("InvalidArgument", format!("--{flag}: {e}")))
}

fn parse_joints(text: &str) -> Result<Vec<LandmarkId>, CliError> {
    if text.trim().eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|s| s.parse().map_err(|e: String| CliError::new("InvalidArgument", format!("--kf-joints: {e}"))))
        .collect()
}

impl PipelineArgs {
    fn meta_override(&self) -> Result<Option<SubjectMeta>, CliError> {
        match (self.sex, self.view) {
            (Some(sex), Some(view)) => Ok(Some(SubjectMeta {
                sex: sex.into(),
                view: view.into(),
            })),
            (None, None) => Ok(None),
            _ => Err(CliError::new(
                "InvalidArgument",
                "--sex and --view must be given together",
            )),
        }
    }

    pub fn to_config(&self) -> Result<PipelineConfig, CliError> {
        let mut filter = match &self.config {
            Some(path) => toml::from_str::<FilterConfig>(&read_text(path)?)
                .map_err(|e| CliError::new("InvalidConfig", format!("{}: {e}", path.display())))?,
            None => FilterConfig::default(),
        };
        if let Some(v) = self.alpha {
            filter.alpha = v;
        }
        if let Some(v) = self.kf_q {
            filter.q = v;
        }
        if let Some(v) = self.kf_r {
            filter.r = v;
        }
        if let Some(v) = self.min_visibility {
            filter.min_visibility = v;
        }
        if let Some(j) = &self.kf_joints {
            filter.filtered_joints = parse_joints(j)?.into_iter().collect();
        }
        filter
            .validate()
            .map_err(|e| CliError::new("InvalidConfig", e.to_string()))?;

        let mut thresholds = Thresholds::default();
        if let Some(b) = &self.lateral_band {
            thresholds.lateral_band = parse_band(b, "lateral-band")?;
        }
        if let Some(b) = &self.ap_band {
            thresholds.ap_band = parse_band(b, "ap-band")?;
        }

        let mass_percents = match &self.mass_table {
            Some(path) => Some(
                toml::from_str::<SegmentPercents>(&read_text(path)?).map_err(|e| {
                    CliError::new("InvalidConfig", format!("{}: {e}", path.display()))
                })?,
            ),
            None => None,
        };

        Ok(PipelineConfig {
            filter,
            thresholds,
            trunk_model: match self.trunk_model {
                TrunkArg::Whole => TrunkModel::Whole,
                TrunkArg::UpperLower => TrunkModel::UpperLower,
            },
            mass_percents,
            axis_mapping: None,
            on_degenerate: match self.on_degenerate {
                PolicyArg::Skip => DegeneratePolicy::Skip,
                PolicyArg::Fail => DegeneratePolicy::Fail,
            },
        })
    }

    fn load_stream(
        &self,
        path: &Path,
        config: &mut PipelineConfig,
    ) -> Result<crate::landmark_io::LandmarkStream, CliError> {
        let bytes = read(path)?;
        let stream = parse_stream(&bytes, self.meta_override()?)
            .map_err(|e| CliError::new(e.kind(), format!("{}: {e}", path.display())))?;
        if self.no_depth && stream.meta.view == View::Front {
            config.axis_mapping = Some(AxisMapping::FrontLateralOnly);
        }
        Ok(stream)
    }
}

impl From<SexArg> for Sex {
    fn from(s: SexArg) -> Self {
        match s {
            SexArg::Male => Sex::Male,
            SexArg::Female => Sex::Female,
        }
    }
}

impl From<ViewArg> for View {
    fn from(v: ViewArg) -> Self {
        match v {
            ViewArg::Front => View::Front,
            ViewArg::Side => View::Side,
        }
    }
}

/// Runs the analysis; returns the verdict exit code.
pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<i32, CliError> {
    let mut config = args.pipeline.to_config()?;
    let stream = args.pipeline.load_stream(&args.input, &mut config)?;
    let analysis = analyze(&stream, &config).map_err(|e| CliError::new(e.kind(), e.to_string()))?;

    let report = report_json(&stream, &config, &analysis.diagnosis);
    let mut text = serde_json::to_string_pretty(&report).expect("report serialization");
    text.push('\n');
    match &args.report {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    if let Some(path) = &args.series {
        write_atomic(path, series_csv(&analysis.series).as_bytes())?;
    }
    Ok(analysis.diagnosis.overall.exit_code())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let scenario: SwayScenario = toml::from_str(&read_text(&args.scenario)?).map_err(|e| {
        CliError::new("InvalidScenario", format!("{}: {e}", args.scenario.display()))
    })?;
    let (stream, truth) = generate(&scenario).map_err(|e| CliError::new(e.kind(), e.to_string()))?;
    fs::create_dir_all(&args.out_dir).map_err(|e| io_error(&args.out_dir, e))?;
    write_atomic(&args.out_dir.join("stream.jsonl"), &write_stream_with_meta(&stream))?;
    write_atomic(&args.out_dir.join("truth.csv"), truth.to_csv().as_bytes())?;
    Ok(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EvalAxis {
    Lateral,
    Ap,
}

impl EvalAxis {
    fn name(self) -> &'static str {
        match self {
            EvalAxis::Lateral => "lateral",
            EvalAxis::Ap => "ap",
        }
    }
}

struct TrialResult {
    label: String,
    axis: EvalAxis,
    predicted: f64,
    truth: f64,
}

fn evaluate_trial(
    args: &EvaluateArgs,
    entry: &crate::evaluation::ManifestEntry,
) -> Result<TrialResult, CliError> {
    let mut config = args.pipeline.to_config()?;
    let stream = args.pipeline.load_stream(&entry.stream_path, &mut config)?;
    let analysis = analyze(&stream, &config).map_err(|e| CliError::new(e.kind(), e.to_string()))?;
    let lateral = analysis.diagnosis.lateral.max_pct;
    let ap = analysis.diagnosis.ap.max_pct;

    match &entry.truth {
        TrialTruth::Scale(reading) => {
            let wd = scale_wd(reading).map_err(|e| CliError::new(e.kind(), e.to_string()))?;
            let predicted = lateral.ok_or_else(|| {
                CliError::new(
                    "NoLateralData",
                    "scale readings need a view with lateral information",
                )
            })?;
            Ok(TrialResult {
                label: entry.label.clone(),
                axis: EvalAxis::Lateral,
                predicted,
                truth: wd.rwd_pct,
            })
        }
        TrialTruth::Table(path) => {
            let rows = parse_truth_table(&read_text(path)?)
                .map_err(|e| CliError::new("BadTruthTable", format!("{}: {e}", path.display())))?;
            let (axis, predicted, truth) = match (lateral, ap) {
                (Some(l), _) => (EvalAxis::Lateral, l, rows.iter().map(|r| r.0).fold(0.0, f64::max)),
                (None, Some(a)) => (EvalAxis::Ap, a, rows.iter().map(|r| r.1).fold(0.0, f64::max)),
                (None, None) => return Err(CliError::new("NoUsableFrames", "no axis available")),
            };
            Ok(TrialResult {
                label: entry.label.clone(),
                axis,
                predicted,
                truth,
            })
        }
    }
}

fn summary_json(s: &EvalSummary) -> serde_json::Value {
    json!({
        "n_trials": s.n_trials,
        "rwd_min_pct": round6(s.rwd_min_pct),
        "rwd_max_pct": round6(s.rwd_max_pct),
        "rwd_mean_pct": round6(s.rwd_mean_pct),
        "rwd_sd_pct": round6(s.rwd_sd_pct),
        "mae_pct": round6(s.mae_pct),
    })
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32, CliError> {
    let text = read_text(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let entries = parse_manifest(&text, base).map_err(|e| CliError::new(e.kind(), e.to_string()))?;
    // Fail fast on bad flags before touching any trial.
    args.pipeline.to_config()?;

    let outcomes: Vec<Result<TrialResult, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = entries
            .iter()
            .map(|entry| scope.spawn(move || evaluate_trial(args, entry)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("trial worker panicked"))
            .collect()
    });

    let mut failures = Vec::new();
    let mut results = Vec::new();
    for (entry, outcome) in entries.iter().zip(outcomes) {
        match outcome {
            Ok(r) => results.push(r),
            Err(e) => failures.push(format!("line {} ({}): {e}", entry.line, entry.label)),
        }
    }
    if !failures.is_empty() {
        return Err(CliError::new("InvalidTrials", failures.join("; ")));
    }

    let mut groups: BTreeMap<EvalAxis, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &results {
        groups.entry(r.axis).or_default().push((r.predicted, r.truth));
    }
    let all: Vec<(f64, f64)> = results.iter().map(|r| (r.predicted, r.truth)).collect();
    let summarize_cli = |t: &[(f64, f64)]| summarize(t).map_err(|e| CliError::new(e.kind(), e.to_string()));
    let combined = summarize_cli(&all)?;
    let mut rows = Vec::new();
    for (axis, trials) in &groups {
        rows.push((axis.name().to_owned(), summarize_cli(trials)?));
    }

    let table = render_table(&rows, Some(&combined));
    let doc = json!({
        "trials": results.iter().map(|r| json!({
            "label": r.label,
            "axis": r.axis.name(),
            "predicted_pct": round6(r.predicted),
            "true_pct": round6(r.truth),
            "abs_error_pct": round6((r.predicted - r.truth).abs()),
        })).collect::<Vec<_>>(),
        "groups": rows.iter().map(|(k, s)| (k.clone(), summary_json(s))).collect::<serde_json::Map<_, _>>(),
        "combined": summary_json(&combined),
    });

    fs::create_dir_all(&args.out_dir).map_err(|e| io_error(&args.out_dir, e))?;
    write_atomic(&args.out_dir.join("summary.txt"), table.as_bytes())?;
    let mut json_text = serde_json::to_string_pretty(&doc).expect("summary serialization");
    json_text.push('\n');
    write_atomic(&args.out_dir.join("summary.json"), json_text.as_bytes())?;
    print!("{table}");
    Ok(0)
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_ERROR,
            };
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_line());
            EXIT_ERROR
        }
    }
}
