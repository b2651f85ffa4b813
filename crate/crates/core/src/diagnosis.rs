//! Romberg verdict from the peak RWD on each axis.
//!
//! Healthy subjects deviate on average 6-7% of body weight laterally and
//! 12-14% anterior-posterior (Henriksson et al., Acta Oto-Laryngol.). Those
//! ranges are treated as closed borderline bands: below is negative, inside
//! is borderline, above is positive.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rwd::RwdSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosisError {
    #[error("no usable frames ({skipped} skipped)")]
    NoUsableFrames { skipped: usize },
    #[error("invalid band [{low}, {high}]: need 0 < low < high")]
    InvalidBand { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub low: f64,
    pub high: f64,
}

impl Band {
    pub fn new(low: f64, high: f64) -> Result<Self, DiagnosisError> {
        if !(low > 0.0 && low < high && high.is_finite()) {
            return Err(DiagnosisError::InvalidBand { low, high });
        }
        Ok(Self { low, high })
    }

    pub fn classify(&self, value: f64) -> Verdict {
        if value < self.low {
            Verdict::Negative
        } else if value <= self.high {
            Verdict::Borderline
        } else {
            Verdict::Positive
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub lateral_band: Band,
    pub ap_band: Band,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            lateral_band: Band { low: 6.0, high: 7.0 },
            ap_band: Band { low: 12.0, high: 14.0 },
        }
    }
}

/// Ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Negative,
    Borderline,
    Positive,
}

impl Verdict {
    /// CLI exit code for this verdict.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Negative => 0,
            Verdict::Borderline => 2,
            Verdict::Positive => 3,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Negative => "negative",
            Verdict::Borderline => "borderline",
            Verdict::Positive => "positive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisResult {
    pub verdict: Verdict,
    /// `None` when the view provides no data on this axis.
    pub max_pct: Option<f64>,
}

impl AxisResult {
    pub fn available(&self) -> bool {
        self.max_pct.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnosis {
    pub lateral: AxisResult,
    pub ap: AxisResult,
    pub overall: Verdict,
    pub n_frames_used: usize,
    pub n_frames_skipped: usize,
}

fn axis(max_pct: Option<f64>, band: &Band) -> AxisResult {
    AxisResult {
        verdict: max_pct.map_or(Verdict::Negative, |m| band.classify(m)),
        max_pct,
    }
}

/// Classifies the per-axis maxima of a series.
pub fn diagnose(series: &RwdSeries, thresholds: &Thresholds) -> Result<Diagnosis, DiagnosisError> {
    if series.samples.is_empty() {
        return Err(DiagnosisError::NoUsableFrames {
            skipped: series.n_skipped(),
        });
    }
    let lateral = axis(series.max_lateral(), &thresholds.lateral_band);
    let ap = axis(series.max_ap(), &thresholds.ap_band);
    Ok(Diagnosis {
        overall: lateral.verdict.max(ap.verdict),
        lateral,
        ap,
        n_frames_used: series.samples.len(),
        n_frames_skipped: series.n_skipped(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biomech::ComSample;
    use crate::rwd::{AxisMapping, RwdSample};

    fn series(values: &[(Option<f64>, Option<f64>)]) -> RwdSeries {
        let com = ComSample {
            t_ms: 0,
            raw: [0.5, 0.5],
            smoothed: [0.5, 0.5],
            z_raw: 0.0,
            z_smoothed: 0.0,
        };
        RwdSeries {
            mapping: AxisMapping::Front,
            samples: values
                .iter()
                .enumerate()
                .map(|(i, &(lateral_pct, ap_pct))| RwdSample {
                    frame_index: i as u64,
                    t_ms: 33 * i as i64,
                    lateral_pct,
                    ap_pct,
                    com,
                })
                .collect(),
            skipped: vec![],
        }
    }

    fn run(lateral: f64, ap: f64) -> Diagnosis {
        let s = series(&[(Some(0.0), Some(0.0)), (Some(lateral), Some(ap))]);
        diagnose(&s, &Thresholds::default()).unwrap()
    }

    #[test]
    fn lateral_above_band_is_positive() {
        let d = run(10.0, 5.0);
        assert_eq!(d.lateral.verdict, Verdict::Positive);
        assert_eq!(d.ap.verdict, Verdict::Negative);
        assert_eq!(d.overall, Verdict::Positive);
        assert_eq!(d.lateral.max_pct, Some(10.0));
    }

    #[test]
    fn below_all_bands_is_negative() {
        assert_eq!(run(3.0, 5.0).overall, Verdict::Negative);
    }

    #[test]
    fn inside_both_bands_is_borderline() {
        let d = run(6.5, 13.0);
        assert_eq!(d.lateral.verdict, Verdict::Borderline);
        assert_eq!(d.ap.verdict, Verdict::Borderline);
        assert_eq!(d.overall, Verdict::Borderline);
    }

    #[test]
    fn band_edges_are_borderline() {
        for v in [6.0, 7.0] {
            assert_eq!(run(v, 0.0).lateral.verdict, Verdict::Borderline);
        }
        for v in [12.0, 14.0] {
            assert_eq!(run(0.0, v).ap.verdict, Verdict::Borderline);
        }
        assert_eq!(run(7.0 + 1e-9, 0.0).lateral.verdict, Verdict::Positive);
    }

    #[test]
    fn missing_axis_is_flagged_and_negative() {
        let s = series(&[(None, Some(20.0))]);
        let d = diagnose(&s, &Thresholds::default()).unwrap();
        assert!(!d.lateral.available());
        assert_eq!(d.lateral.verdict, Verdict::Negative);
        assert_eq!(d.overall, Verdict::Positive);
    }

    #[test]
    fn empty_series_has_no_usable_frames() {
        let mut s = series(&[]);
        s.skipped.push((0, crate::rwd::RwdError::DegenerateStance { separation: 0.0 }));
        assert_eq!(
            diagnose(&s, &Thresholds::default()).unwrap_err(),
            DiagnosisError::NoUsableFrames { skipped: 1 }
        );
    }

    #[test]
    fn band_validation() {
        assert!(Band::new(6.0, 7.0).is_ok());
        assert!(Band::new(7.0, 6.0).is_err());
        assert!(Band::new(0.0, 1.0).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Verdict::Negative.exit_code(), 0);
        assert_eq!(Verdict::Borderline.exit_code(), 2);
        assert_eq!(Verdict::Positive.exit_code(), 3);
    }
}
