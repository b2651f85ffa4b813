//! End-to-end analysis of one stream and its JSON report.

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::biomech::{SegmentMassTable, SegmentPercents, TrunkModel};
use crate::diagnosis::{diagnose, AxisResult, Diagnosis, DiagnosisError, Thresholds};
use crate::filtering::FilterConfig;
use crate::landmark_io::LandmarkStream;
use crate::rwd::{rwd_series, AxisMapping, DegeneratePolicy, RwdError, RwdSeries};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Rwd(#[from] RwdError),
    #[error(transparent)]
    Diagnosis(#[from] DiagnosisError),
    #[error("invalid mass table: {0}")]
    MassTable(#[from] crate::biomech::MassTableError),
}

impl PipelineError {
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Rwd(e) => e.kind(),
            PipelineError::Diagnosis(DiagnosisError::NoUsableFrames { .. }) => "NoUsableFrames",
            PipelineError::Diagnosis(DiagnosisError::InvalidBand { .. }) => "InvalidBand",
            PipelineError::MassTable(_) => "InvalidMassTable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub filter: FilterConfig,
    pub thresholds: Thresholds,
    pub trunk_model: TrunkModel,
    /// Replacement mass percentages; the built-in table when `None`.
    pub mass_percents: Option<SegmentPercents>,
    /// Derived from the stream's view when `None`.
    pub axis_mapping: Option<AxisMapping>,
    pub on_degenerate: DegeneratePolicy,
}

impl PipelineConfig {
    pub fn mapping_for(&self, stream: &LandmarkStream) -> AxisMapping {
        self.axis_mapping.unwrap_or_else(|| stream.meta.view.into())
    }

    pub fn mass_table(&self, stream: &LandmarkStream) -> Result<SegmentMassTable, PipelineError> {
        let sex = stream.meta.sex;
        Ok(match self.mass_percents {
            Some(p) => SegmentMassTable::from_percents(sex, self.trunk_model, p)?,
            None => SegmentMassTable::new(sex, self.trunk_model),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub series: RwdSeries,
    pub diagnosis: Diagnosis,
}

/// Filter, CoM, RWD and diagnosis for one stream.
pub fn analyze(stream: &LandmarkStream, config: &PipelineConfig) -> Result<Analysis, PipelineError> {
    let table = config.mass_table(stream)?;
    let series = rwd_series(
        stream,
        &table,
        &config.filter,
        config.mapping_for(stream),
        config.on_degenerate,
    )?;
    let diagnosis = diagnose(&series, &config.thresholds)?;
    Ok(Analysis { series, diagnosis })
}

/// Rounds to 6 decimal places for stable report output.
pub fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn axis_json(axis: &AxisResult) -> Value {
    json!({
        "verdict": axis.verdict,
        "max_pct": axis.max_pct.map(round6),
        "available": axis.available(),
    })
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    sex: crate::landmark_io::Sex,
    view: crate::landmark_io::View,
    axis_mapping: AxisMapping,
    alpha: f64,
    q: f64,
    r: f64,
    filtered_joints: Vec<&'static str>,
    min_visibility: f64,
    trunk_model: TrunkModel,
    mass_table: &'a str,
    on_degenerate: DegeneratePolicy,
}

pub fn report_json(stream: &LandmarkStream, config: &PipelineConfig, diagnosis: &Diagnosis) -> Value {
    let f = &config.filter;
    let echo = ConfigEcho {
        sex: stream.meta.sex,
        view: stream.meta.view,
        axis_mapping: config.mapping_for(stream),
        alpha: f.alpha,
        q: f.q,
        r: f.r,
        filtered_joints: f.filtered_joints.iter().map(|j| j.name()).collect(),
        min_visibility: f.min_visibility,
        trunk_model: config.trunk_model,
        mass_table: if config.mass_percents.is_some() {
            "override"
        } else {
            "de_leva_1996"
        },
        on_degenerate: config.on_degenerate,
    };
    let t = &config.thresholds;
    json!({
        "overall": diagnosis.overall,
        "lateral": axis_json(&diagnosis.lateral),
        "ap": axis_json(&diagnosis.ap),
        "thresholds": {
            "lateral_band": [t.lateral_band.low, t.lateral_band.high],
            "ap_band": [t.ap_band.low, t.ap_band.high],
        },
        "frames": {
            "used": diagnosis.n_frames_used,
            "skipped": diagnosis.n_frames_skipped,
        },
        "pipeline_config": echo,
    })
}
