//! Accuracy evaluation against dual-scale readings or simulator truth.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("scale readings sum to zero")]
    ZeroTotalWeight,
    #[error("invalid scale reading: {0}")]
    InvalidReading(String),
    #[error("length mismatch: {predicted} predictions vs {truth} truths")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("need at least one trial")]
    NoTrials,
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("manifest line {line}: {reason}")]
    BadManifestLine { line: usize, reason: String },
}

impl EvalError {
    pub fn kind(&self) -> &'static str {
        match self {
            EvalError::ZeroTotalWeight => "ZeroTotalWeight",
            EvalError::InvalidReading(_) => "InvalidReading",
            EvalError::LengthMismatch { .. } => "LengthMismatch",
            EvalError::NoTrials => "NoTrials",
            EvalError::EmptyManifest => "EmptyManifest",
            EvalError::BadManifestLine { .. } => "BadManifestLine",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleReading {
    pub s_right_kg: f64,
    pub s_left_kg: f64,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightDistribution {
    pub right: f64,
    pub left: f64,
    /// `100 |WD_R - WD_L|`.
    pub rwd_pct: f64,
}

/// Weight distribution over two scales, as fractions of total weight.
pub fn scale_wd(reading: &ScaleReading) -> Result<WeightDistribution, EvalError> {
    let (r, l) = (reading.s_right_kg, reading.s_left_kg);
    if !(r >= 0.0 && l >= 0.0 && r.is_finite() && l.is_finite()) {
        return Err(EvalError::InvalidReading(format!(
            "{}: readings must be finite and non-negative",
            reading.label
        )));
    }
    let total = r + l;
    if total == 0.0 {
        return Err(EvalError::ZeroTotalWeight);
    }
    let right = r / total;
    let left = l / total;
    Ok(WeightDistribution {
        right,
        left,
        rwd_pct: 100.0 * (right - left).abs(),
    })
}

pub fn mae(predicted: &[f64], truth: &[f64]) -> Result<f64, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(EvalError::NoTrials);
    }
    let total: f64 = predicted.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / predicted.len() as f64)
}

/// One row of the results table. SD is the population SD (divide by n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalSummary {
    pub n_trials: usize,
    pub rwd_min_pct: f64,
    pub rwd_max_pct: f64,
    pub rwd_mean_pct: f64,
    pub rwd_sd_pct: f64,
    pub mae_pct: f64,
}

/// Summarizes `(predicted_pct, true_pct)` pairs; the RWD statistics describe
/// the true values.
pub fn summarize(trials: &[(f64, f64)]) -> Result<EvalSummary, EvalError> {
    if trials.is_empty() {
        return Err(EvalError::NoTrials);
    }
    let n = trials.len() as f64;
    let truth: Vec<f64> = trials.iter().map(|t| t.1).collect();
    let predicted: Vec<f64> = trials.iter().map(|t| t.0).collect();
    let mean = truth.iter().sum::<f64>() / n;
    let var = truth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(EvalSummary {
        n_trials: trials.len(),
        rwd_min_pct: truth.iter().copied().fold(f64::INFINITY, f64::min),
        rwd_max_pct: truth.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        rwd_mean_pct: mean,
        rwd_sd_pct: var.sqrt(),
        mae_pct: mae(&predicted, &truth)?,
    })
}

pub const TABLE_HEADER: [&str; 4] = ["Subject", "RWD", "Num. Trials", "Mean Absolute Error"];

/// Renders rows as a tab-separated table with the columns subject, RWD
/// range/mean/SD, trial count and MAE. The combined row carries no RWD
/// statistics.
pub fn render_table(rows: &[(String, EvalSummary)], combined: Option<&EvalSummary>) -> String {
    let mut out = TABLE_HEADER.join("\t");
    out.push('\n');
    for (label, s) in rows {
        let _ = writeln!(
            out,
            "{label}\t{:.6}%-{:.6}% Mean: {:.6}% SD: {:.6}%\t{}\t\u{b1}{:.6}%",
            s.rwd_min_pct, s.rwd_max_pct, s.rwd_mean_pct, s.rwd_sd_pct, s.n_trials, s.mae_pct
        );
    }
    if let Some(c) = combined {
        let _ = writeln!(out, "Combined\t-\t{}\t\u{b1}{:.6}%", c.n_trials, c.mae_pct);
    }
    out
}

/// Where a trial's ground truth comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialTruth {
    Scale(ScaleReading),
    /// A simulator truth table (`frame,t_ms,true_lateral_pct,true_ap_pct`).
    Table(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub line: usize,
    pub stream_path: PathBuf,
    pub truth: TrialTruth,
    pub label: String,
}

/// Parses a manifest; relative paths resolve against `base_dir`.
///
/// Each non-empty, non-`#` line is `stream_path,s_right_kg,s_left_kg,label`
/// or `stream_path,@truth_path,label`.
pub fn parse_manifest(text: &str, base_dir: &Path) -> Result<Vec<ManifestEntry>, EvalError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let bad = |reason: String| EvalError::BadManifestLine { line, reason };
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let entry = match fields.as_slice() {
            [stream, truth, label] if truth.starts_with('@') => ManifestEntry {
                line,
                stream_path: resolve(stream),
                truth: TrialTruth::Table(resolve(&truth[1..])),
                label: (*label).to_owned(),
            },
            [stream, right, left, label] => {
                let num = |s: &str, what: &str| {
                    s.parse::<f64>()
                        .map_err(|_| bad(format!("{what} `{s}` is not a number")))
                };
                ManifestEntry {
                    line,
                    stream_path: resolve(stream),
                    truth: TrialTruth::Scale(ScaleReading {
                        s_right_kg: num(right, "s_right_kg")?,
                        s_left_kg: num(left, "s_left_kg")?,
                        label: (*label).to_owned(),
                    }),
                    label: (*label).to_owned(),
                }
            }
            _ => {
                return Err(bad(format!(
                    "expected `stream,s_right_kg,s_left_kg,label` or `stream,@truth,label`, got {} fields",
                    fields.len()
                )))
            }
        };
        if entry.stream_path.as_os_str().is_empty() {
            return Err(bad("empty stream path".into()));
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    Ok(entries)
}

/// Per-frame true RWD values from a simulator truth table: `(lateral, ap)`.
pub fn parse_truth_table(text: &str) -> Result<Vec<(f64, f64)>, String> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == crate::sway_sim::TRUTH_CSV_HEADER => {}
        other => return Err(format!("unexpected truth header {other:?}")),
    }
    let mut out = Vec::new();
    for (i, l) in lines.enumerate() {
        let cols: Vec<&str> = l.split(',').collect();
        let parse = |c: Option<&&str>| -> Result<f64, String> {
            c.ok_or_else(|| format!("truth row {}: missing column", i + 1))?
                .trim()
                .parse()
                .map_err(|e| format!("truth row {}: {e}", i + 1))
        };
        if cols.len() != 4 {
            return Err(format!("truth row {}: expected 4 columns", i + 1));
        }
        out.push((parse(cols.get(2))?, parse(cols.get(3))?));
    }
    if out.is_empty() {
        return Err("truth table has no rows".into());
    }
    Ok(out)
}
