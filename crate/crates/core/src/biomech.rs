//! Body-segment mass model and center-of-mass estimation.
//!
//! Segment mass percentages come from de Leva's adjusted Zatsiorsky-Seluyanov
//! table (J. Biomech. 29, 1996). Middle trunk, forearms and shanks are left
//! out of the model and the remaining fractions renormalized to sum to one.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::filtering::{filter_stream, Ema, FilterConfig, FilterError};
use crate::landmark_io::{Frame, LandmarkId, LandmarkStream, Sex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Segment {
    Head,
    Trunk,
    UpperTrunk,
    LowerTrunk,
    UpperArmL,
    UpperArmR,
    HandL,
    HandR,
    ThighL,
    ThighR,
    FootL,
    FootR,
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Which trunk segmentation is retained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrunkModel {
    /// The whole trunk as one segment (mid-shoulder to mid-hip).
    #[default]
    Whole,
    /// Upper and lower trunk sub-segments; the middle trunk is dropped.
    UpperLower,
}

/// Mass percentages for the segments the model can use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentPercents {
    pub head: f64,
    pub trunk: f64,
    pub upper_trunk: f64,
    pub lower_trunk: f64,
    pub upper_arm: f64,
    pub hand: f64,
    pub thigh: f64,
    pub foot: f64,
}

// de Leva (1996), mass % column, female then male.
const FEMALE_PERCENTS: SegmentPercents = SegmentPercents {
    head: 6.68,
    trunk: 42.57,
    upper_trunk: 15.45,
    lower_trunk: 12.47,
    upper_arm: 2.55,
    hand: 0.56,
    thigh: 14.78,
    foot: 1.29,
};

const MALE_PERCENTS: SegmentPercents = SegmentPercents {
    head: 6.94,
    trunk: 43.46,
    upper_trunk: 15.96,
    lower_trunk: 11.17,
    upper_arm: 2.71,
    hand: 0.61,
    thigh: 14.16,
    foot: 1.37,
};

/// Longitudinal lengths (mm) of the upper, middle and lower trunk, used to
/// place the xiphoid and omphalion points along the shoulder-hip line.
const FEMALE_TRUNK_LENGTHS_MM: [f64; 3] = [142.5, 205.3, 181.5];
const MALE_TRUNK_LENGTHS_MM: [f64; 3] = [170.7, 215.5, 145.7];

impl SegmentPercents {
    pub fn de_leva(sex: Sex) -> Self {
        match sex {
            Sex::Female => FEMALE_PERCENTS,
            Sex::Male => MALE_PERCENTS,
        }
    }

    fn percent_of(&self, segment: Segment) -> f64 {
        match segment {
            Segment::Head => self.head,
            Segment::Trunk => self.trunk,
            Segment::UpperTrunk => self.upper_trunk,
            Segment::LowerTrunk => self.lower_trunk,
            Segment::UpperArmL | Segment::UpperArmR => self.upper_arm,
            Segment::HandL | Segment::HandR => self.hand,
            Segment::ThighL | Segment::ThighR => self.thigh,
            Segment::FootL | Segment::FootR => self.foot,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentWeight {
    pub segment: Segment,
    /// Table value in percent of body mass.
    pub raw_percent: f64,
    /// Fraction after renormalizing over the retained segments.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMassTable {
    pub sex: Sex,
    pub trunk_model: TrunkModel,
    pub segments: Vec<SegmentWeight>,
    /// Positions of the xiphoid and omphalion along the shoulder-hip line,
    /// as fractions from the shoulder end.
    trunk_marks: [f64; 2],
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MassTableError {
    #[error("segment {segment} has non-positive mass {value}")]
    NonPositive { segment: Segment, value: f64 },
}

fn retained_segments(model: TrunkModel) -> &'static [Segment] {
    use Segment::*;
    match model {
        TrunkModel::Whole => &[
            Head, Trunk, UpperArmL, UpperArmR, HandL, HandR, ThighL, ThighR, FootL, FootR,
        ],
        TrunkModel::UpperLower => &[
            Head, UpperTrunk, LowerTrunk, UpperArmL, UpperArmR, HandL, HandR, ThighL, ThighR,
            FootL, FootR,
        ],
    }
}

/// de Leva table for `sex` with the whole-trunk segmentation.
pub fn mass_table(sex: Sex) -> SegmentMassTable {
    SegmentMassTable::new(sex, TrunkModel::Whole)
}

impl SegmentMassTable {
    pub fn new(sex: Sex, trunk_model: TrunkModel) -> Self {
        Self::from_percents(sex, trunk_model, SegmentPercents::de_leva(sex))
            .expect("built-in table is positive")
    }

    /// Builds a table from replacement percentages (sensitivity studies).
    pub fn from_percents(
        sex: Sex,
        trunk_model: TrunkModel,
        percents: SegmentPercents,
    ) -> Result<Self, MassTableError> {
        let retained = retained_segments(trunk_model);
        let mut segments = Vec::with_capacity(retained.len());
        for &segment in retained {
            let value = percents.percent_of(segment);
            if !(value > 0.0 && value.is_finite()) {
                return Err(MassTableError::NonPositive { segment, value });
            }
            segments.push(SegmentWeight {
                segment,
                raw_percent: value,
                weight: 0.0,
            });
        }
        let total: f64 = segments.iter().map(|s| s.raw_percent).sum();
        for s in &mut segments {
            s.weight = s.raw_percent / total;
        }

        let lengths = match sex {
            Sex::Female => FEMALE_TRUNK_LENGTHS_MM,
            Sex::Male => MALE_TRUNK_LENGTHS_MM,
        };
        let total_len: f64 = lengths.iter().sum();
        let trunk_marks = [lengths[0] / total_len, (lengths[0] + lengths[1]) / total_len];

        Ok(Self {
            sex,
            trunk_model,
            segments,
            trunk_marks,
        })
    }

    pub fn raw_percent(&self, segment: Segment) -> Option<f64> {
        self.entry(segment).map(|s| s.raw_percent)
    }

    pub fn weight(&self, segment: Segment) -> Option<f64> {
        self.entry(segment).map(|s| s.weight)
    }

    /// Sum of the retained raw percentages.
    pub fn raw_total_percent(&self) -> f64 {
        self.segments.iter().map(|s| s.raw_percent).sum()
    }

    fn entry(&self, segment: Segment) -> Option<&SegmentWeight> {
        self.segments.iter().find(|s| s.segment == segment)
    }

    pub fn weights(&self) -> BTreeMap<Segment, f64> {
        self.segments.iter().map(|s| (s.segment, s.weight)).collect()
    }

    /// Representative point of `segment` in `frame`, as (x, y, z).
    pub fn segment_position(&self, frame: &Frame, segment: Segment) -> [f64; 3] {
        let shoulders = mid(frame, LandmarkId::LEFT_SHOULDER, LandmarkId::RIGHT_SHOULDER);
        let hips = mid(frame, LandmarkId::LEFT_HIP, LandmarkId::RIGHT_HIP);
        let [xyph, omph] = self.trunk_marks;
        match segment {
            Segment::UpperTrunk => midpoint(shoulders, lerp(shoulders, hips, xyph)),
            Segment::LowerTrunk => midpoint(lerp(shoulders, hips, omph), hips),
            other => segment_position(frame, other),
        }
    }

    /// Weighted sum of segment points.
    pub fn compute_com(&self, frame: &Frame) -> [f64; 3] {
        let mut com = [0.0; 3];
        for s in &self.segments {
            let p = self.segment_position(frame, s.segment);
            for (c, v) in com.iter_mut().zip(p) {
                *c += s.weight * v;
            }
        }
        com
    }
}

fn point(frame: &Frame, id: LandmarkId) -> [f64; 3] {
    let lm = frame.landmark(id);
    [lm.x, lm.y, lm.z]
}

fn midpoint(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|i| 0.5 * (a[i] + b[i]))
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    std::array::from_fn(|i| a[i] + t * (b[i] - a[i]))
}

fn mid(frame: &Frame, a: LandmarkId, b: LandmarkId) -> [f64; 3] {
    midpoint(point(frame, a), point(frame, b))
}

/// Midpoint of the segment's endpoints.
///
/// The trunk runs from mid-shoulder to mid-hip and the hand collapses to
/// the wrist. The split trunk segments depend on sex-specific proportions,
/// so for those this falls back to the default (male) proportions; use
/// [`SegmentMassTable::segment_position`] instead.
pub fn segment_position(frame: &Frame, segment: Segment) -> [f64; 3] {
    use LandmarkId as L;
    match segment {
        Segment::Head => mid(frame, L::LEFT_EAR, L::RIGHT_EAR),
        Segment::Trunk => midpoint(
            mid(frame, L::LEFT_SHOULDER, L::RIGHT_SHOULDER),
            mid(frame, L::LEFT_HIP, L::RIGHT_HIP),
        ),
        Segment::UpperTrunk | Segment::LowerTrunk => {
            mass_table(Sex::Male).segment_position(frame, segment)
        }
        Segment::UpperArmL => mid(frame, L::LEFT_SHOULDER, L::LEFT_ELBOW),
        Segment::UpperArmR => mid(frame, L::RIGHT_SHOULDER, L::RIGHT_ELBOW),
        Segment::HandL => point(frame, L::LEFT_WRIST),
        Segment::HandR => point(frame, L::RIGHT_WRIST),
        Segment::ThighL => mid(frame, L::LEFT_HIP, L::LEFT_KNEE),
        Segment::ThighR => mid(frame, L::RIGHT_HIP, L::RIGHT_KNEE),
        Segment::FootL => mid(frame, L::LEFT_HEEL, L::LEFT_FOOT_INDEX),
        Segment::FootR => mid(frame, L::RIGHT_HEEL, L::RIGHT_FOOT_INDEX),
    }
}

pub fn compute_com(frame: &Frame, table: &SegmentMassTable) -> [f64; 3] {
    table.compute_com(frame)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComSample {
    pub t_ms: i64,
    pub raw: [f64; 2],
    pub smoothed: [f64; 2],
    pub z_raw: f64,
    pub z_smoothed: f64,
}

/// CoM of every frame of an already-filtered stream, EMA-smoothed in x, y
/// and z.
pub fn com_series_filtered(
    filtered: &LandmarkStream,
    table: &SegmentMassTable,
    alpha: f64,
) -> Vec<ComSample> {
    let mut ema = Ema::<3>::new(alpha);
    filtered
        .frames
        .iter()
        .map(|frame| {
            let raw = table.compute_com(frame);
            let smooth = ema.push(raw);
            ComSample {
                t_ms: frame.t_ms,
                raw: [raw[0], raw[1]],
                smoothed: [smooth[0], smooth[1]],
                z_raw: raw[2],
                z_smoothed: smooth[2],
            }
        })
        .collect()
}

/// Kalman-filters the configured joints, then computes and smooths the CoM.
pub fn com_series(
    stream: &LandmarkStream,
    table: &SegmentMassTable,
    config: &FilterConfig,
) -> Result<Vec<ComSample>, FilterError> {
    let filtered = filter_stream(stream, config)?;
    Ok(com_series_filtered(&filtered, table, config.alpha))
}
