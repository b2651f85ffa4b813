//! Relative weight distribution (RWD) from the CoM and the support points.
//!
//! Lateral: static torque and force balance over two supports. With the CoM
//! at distances `d_l`, `d_r` from the left and right supports,
//!
//! ```text
//! N_l + N_r = m g,    N_l d_l = N_r d_r
//! => N_l = m g d_r / (d_l + d_r),   N_r = m g d_l / (d_l + d_r)
//! ```
//!
//! so the foot nearer the CoM carries more load, and the imbalance
//! `|N_l - N_r| / m g` is a pure ratio of distances.
//!
//! Anterior-posterior: the lean angle `theta = atan(d_h / d_v)` of the
//! ankle-to-CoM line, with the horizontal load `W_horiz = W_vert tan(theta)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biomech::{com_series_filtered, ComSample, SegmentMassTable};
use crate::filtering::{filter_stream, Ema, FilterConfig, FilterError};
use crate::landmark_io::{Frame, LandmarkId, LandmarkStream, View};

/// Minimum support separation / CoM height, normalized units.
pub const DEGENERACY_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RwdError {
    #[error("feet coincide (support separation {separation:e})")]
    DegenerateStance { separation: f64 },
    #[error("CoM is not above the ankles (vertical distance {d_v:e})")]
    DegenerateLean { d_v: f64 },
    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: u64,
        #[source]
        source: Box<RwdError>,
    },
    #[error(transparent)]
    Filter(#[from] FilterError),
}

impl RwdError {
    pub fn kind(&self) -> &'static str {
        match self {
            RwdError::DegenerateStance { .. } => "DegenerateStance",
            RwdError::DegenerateLean { .. } => "DegenerateLean",
            RwdError::AtFrame { source, .. } => source.kind(),
            RwdError::Filter(_) => "FilterError",
        }
    }
}

/// Support forces as fractions of body weight, `(left, right)`.
pub fn support_forces(d_left: f64, d_right: f64) -> (f64, f64) {
    let span = d_left + d_right;
    (d_right / span, d_left / span)
}

/// Lateral imbalance `|N_l - N_r|` as percent of body weight.
pub fn lateral_rwd(com_x: f64, left_x: f64, right_x: f64) -> Result<f64, RwdError> {
    let separation = right_x - left_x;
    if !(separation > DEGENERACY_EPS) {
        return Err(RwdError::DegenerateStance { separation });
    }
    let d_left = (com_x - left_x).abs();
    let d_right = (right_x - com_x).abs();
    let (n_left, n_right) = support_forces(d_left, d_right);
    Ok(100.0 * (n_left - n_right).abs())
}

/// Lean angle of the ankle-to-CoM line from vertical, radians.
pub fn lean_angle(d_h: f64, d_v: f64) -> Result<f64, RwdError> {
    if !(d_v > DEGENERACY_EPS) {
        return Err(RwdError::DegenerateLean { d_v });
    }
    Ok((d_h.abs() / d_v).atan())
}

/// Horizontal weight component as percent of body weight.
pub fn ap_rwd(d_h: f64, d_v: f64) -> Result<f64, RwdError> {
    Ok(100.0 * lean_angle(d_h, d_v)?.tan())
}

/// Support points of one frame, canonicalized so `left_x <= right_x` in the
/// image regardless of which way the subject faces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportGeometry {
    pub left_foot_x: f64,
    pub right_foot_x: f64,
    pub ankle_mid: [f64; 3],
}

impl SupportGeometry {
    /// Each foot's support point is the midpoint of heel and foot index.
    pub fn from_frame(frame: &Frame) -> Self {
        let foot_x = |heel: LandmarkId, toe: LandmarkId| {
            0.5 * (frame.landmark(heel).x + frame.landmark(toe).x)
        };
        let a = foot_x(LandmarkId::LEFT_HEEL, LandmarkId::LEFT_FOOT_INDEX);
        let b = foot_x(LandmarkId::RIGHT_HEEL, LandmarkId::RIGHT_FOOT_INDEX);
        let la = frame.landmark(LandmarkId::LEFT_ANKLE);
        let ra = frame.landmark(LandmarkId::RIGHT_ANKLE);
        Self {
            left_foot_x: a.min(b),
            right_foot_x: a.max(b),
            ankle_mid: [
                0.5 * (la.x + ra.x),
                0.5 * (la.y + ra.y),
                0.5 * (la.z + ra.z),
            ],
        }
    }
}

/// How image axes map onto the body's lateral and anterior-posterior axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisMapping {
    /// Image x is lateral; relative depth z is anterior-posterior.
    Front,
    /// Front view without trusting depth: lateral only.
    FrontLateralOnly,
    /// Image x is anterior-posterior; no lateral information.
    Side,
}

impl From<View> for AxisMapping {
    fn from(view: View) -> Self {
        match view {
            View::Front => AxisMapping::Front,
            View::Side => AxisMapping::Side,
        }
    }
}

impl AxisMapping {
    pub fn has_lateral(self) -> bool {
        matches!(self, AxisMapping::Front | AxisMapping::FrontLateralOnly)
    }

    pub fn has_ap(self) -> bool {
        matches!(self, AxisMapping::Front | AxisMapping::Side)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegeneratePolicy {
    #[default]
    Skip,
    Fail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RwdSample {
    pub frame_index: u64,
    pub t_ms: i64,
    pub lateral_pct: Option<f64>,
    pub ap_pct: Option<f64>,
    pub com: ComSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RwdSeries {
    pub mapping: AxisMapping,
    pub samples: Vec<RwdSample>,
    /// Frames dropped under [`DegeneratePolicy::Skip`], with the reason.
    pub skipped: Vec<(u64, RwdError)>,
}

impl RwdSeries {
    pub fn n_skipped(&self) -> usize {
        self.skipped.len()
    }

    pub fn max_lateral(&self) -> Option<f64> {
        self.samples.iter().filter_map(|s| s.lateral_pct).reduce(f64::max)
    }

    pub fn max_ap(&self) -> Option<f64> {
        self.samples.iter().filter_map(|s| s.ap_pct).reduce(f64::max)
    }
}

fn frame_rwd(
    com: &ComSample,
    ankle_z: f64,
    support: &SupportGeometry,
    mapping: AxisMapping,
) -> Result<(Option<f64>, Option<f64>), RwdError> {
    let lateral = if mapping.has_lateral() {
        Some(lateral_rwd(com.smoothed[0], support.left_foot_x, support.right_foot_x)?)
    } else {
        None
    };
    let d_v = (com.smoothed[1] - support.ankle_mid[1]).abs();
    let ap = match mapping {
        AxisMapping::Front => Some(ap_rwd((com.z_smoothed - ankle_z).abs(), d_v)?),
        AxisMapping::Side => Some(ap_rwd((com.smoothed[0] - support.ankle_mid[0]).abs(), d_v)?),
        AxisMapping::FrontLateralOnly => None,
    };
    Ok((lateral, ap))
}

/// Full per-frame pipeline: Kalman filter, CoM with EMA, then RWD on each
/// axis the mapping provides.
pub fn rwd_series(
    stream: &LandmarkStream,
    table: &SegmentMassTable,
    config: &FilterConfig,
    mapping: AxisMapping,
    policy: DegeneratePolicy,
) -> Result<RwdSeries, RwdError> {
    let filtered = filter_stream(stream, config)?;
    let coms = com_series_filtered(&filtered, table, config.alpha);
    let mut ankle_z = Ema::<1>::new(config.alpha);

    let mut samples = Vec::with_capacity(coms.len());
    let mut skipped = Vec::new();
    for (frame, com) in filtered.frames.iter().zip(coms) {
        let support = SupportGeometry::from_frame(frame);
        let [z] = ankle_z.push([support.ankle_mid[2]]);
        match frame_rwd(&com, z, &support, mapping) {
            Ok((lateral_pct, ap_pct)) => samples.push(RwdSample {
                frame_index: frame.frame_index,
                t_ms: frame.t_ms,
                lateral_pct,
                ap_pct,
                com,
            }),
            Err(e) => match policy {
                DegeneratePolicy::Skip => skipped.push((frame.frame_index, e)),
                DegeneratePolicy::Fail => {
                    return Err(RwdError::AtFrame {
                        frame: frame.frame_index,
                        source: Box::new(e),
                    })
                }
            },
        }
    }
    Ok(RwdSeries {
        mapping,
        samples,
        skipped,
    })
}

pub const SERIES_CSV_HEADER: &str = "frame,t_ms,lateral_pct,ap_pct,com_x,com_y,com_z";

/// Series table, one row per kept frame; unavailable axes are empty cells.
pub fn series_csv(series: &RwdSeries) -> String {
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    let mut out = String::from(SERIES_CSV_HEADER);
    out.push('\n');
    for s in &series.samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{:.6}",
            s.frame_index,
            s.t_ms,
            opt(s.lateral_pct),
            opt(s.ap_pct),
            s.com.smoothed[0],
            s.com.smoothed[1],
            s.com.z_smoothed,
        );
    }
    out
}
