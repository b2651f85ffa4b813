//! Landmark data model and the line-oriented wire format.
//!
//! One frame per line, each a JSON object:
//!
//! ```text
//! {"v":1,"frame":0,"t_ms":0,"w":1080,"h":1080,"landmarks":[{"i":0,"x":0.5,"y":0.1,"z":0.0,"vis":1.0}, ...]}
//! ```
//!
//! Subject metadata travels out of band, either supplied by the caller or in
//! a header line of the form `#meta {"sex":"male","view":"front"}`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_LANDMARKS: usize = 33;
pub const SCHEMA_VERSION: u32 = 1;
const META_PREFIX: &str = "#meta ";

/// Coordinates outside this range are rejected on parse.
pub const COORD_MIN: f64 = -0.5;
pub const COORD_MAX: f64 = 1.5;

/// Index into the 33-point pose topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct LandmarkId(u8);

const LANDMARK_NAMES: [&str; NUM_LANDMARKS] = [
    "nose",
    "left_eye_inner",
    "left_eye",
    "left_eye_outer",
    "right_eye_inner",
    "right_eye",
    "right_eye_outer",
    "left_ear",
    "right_ear",
    "mouth_left",
    "mouth_right",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_pinky",
    "right_pinky",
    "left_index",
    "right_index",
    "left_thumb",
    "right_thumb",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
    "left_heel",
    "right_heel",
    "left_foot_index",
    "right_foot_index",
];

impl LandmarkId {
    pub const NOSE: Self = Self(0);
    pub const LEFT_EYE_INNER: Self = Self(1);
    pub const LEFT_EYE: Self = Self(2);
    pub const LEFT_EYE_OUTER: Self = Self(3);
    pub const RIGHT_EYE_INNER: Self = Self(4);
    pub const RIGHT_EYE: Self = Self(5);
    pub const RIGHT_EYE_OUTER: Self = Self(6);
    pub const LEFT_EAR: Self = Self(7);
    pub const RIGHT_EAR: Self = Self(8);
    pub const MOUTH_LEFT: Self = Self(9);
    pub const MOUTH_RIGHT: Self = Self(10);
    pub const LEFT_SHOULDER: Self = Self(11);
    pub const RIGHT_SHOULDER: Self = Self(12);
    pub const LEFT_ELBOW: Self = Self(13);
    pub const RIGHT_ELBOW: Self = Self(14);
    pub const LEFT_WRIST: Self = Self(15);
    pub const RIGHT_WRIST: Self = Self(16);
    pub const LEFT_PINKY: Self = Self(17);
    pub const RIGHT_PINKY: Self = Self(18);
    pub const LEFT_INDEX: Self = Self(19);
    pub const RIGHT_INDEX: Self = Self(20);
    pub const LEFT_THUMB: Self = Self(21);
    pub const RIGHT_THUMB: Self = Self(22);
    pub const LEFT_HIP: Self = Self(23);
    pub const RIGHT_HIP: Self = Self(24);
    pub const LEFT_KNEE: Self = Self(25);
    pub const RIGHT_KNEE: Self = Self(26);
    pub const LEFT_ANKLE: Self = Self(27);
    pub const RIGHT_ANKLE: Self = Self(28);
    pub const LEFT_HEEL: Self = Self(29);
    pub const RIGHT_HEEL: Self = Self(30);
    pub const LEFT_FOOT_INDEX: Self = Self(31);
    pub const RIGHT_FOOT_INDEX: Self = Self(32);

    pub fn new(index: u8) -> Option<Self> {
        (usize::from(index) < NUM_LANDMARKS).then_some(Self(index))
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn name(self) -> &'static str {
        LANDMARK_NAMES[self.index()]
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..NUM_LANDMARKS as u8).map(Self)
    }
}

impl TryFrom<u8> for LandmarkId {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Self::new(value).ok_or_else(|| format!("landmark id {value} out of range 0..=32"))
    }
}

impl From<LandmarkId> for u8 {
    fn from(id: LandmarkId) -> u8 {
        id.0
    }
}

impl fmt::Display for LandmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LandmarkId {
    type Err = String;

    /// Accepts either the topology name (`left_ankle`) or the numeric index.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(n) = s.parse::<u8>() {
            return Self::try_from(n);
        }
        LANDMARK_NAMES
            .iter()
            .position(|name| name.eq_ignore_ascii_case(s))
            .map(|i| Self(i as u8))
            .ok_or_else(|| format!("unknown landmark `{s}`"))
    }
}

/// One keypoint in image-normalized coordinates (y grows downward, z negative
/// toward the camera).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Landmark {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub visibility: f64,
}

impl Landmark {
    pub fn new(x: f64, y: f64, z: f64, visibility: f64) -> Self {
        Self { x, y, z, visibility }
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    fn check(&self) -> Result<(), String> {
        for (axis, v) in [("x", self.x), ("y", self.y)] {
            if !v.is_finite() {
                return Err(format!("{axis} is not finite"));
            }
            if !(COORD_MIN..=COORD_MAX).contains(&v) {
                return Err(format!("{axis}={v} outside [{COORD_MIN}, {COORD_MAX}]"));
            }
        }
        if !self.z.is_finite() {
            return Err("z is not finite".into());
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(format!("visibility {} outside [0, 1]", self.visibility));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub frame_index: u64,
    pub t_ms: i64,
    pub width_px: u32,
    pub height_px: u32,
    pub landmarks: [Landmark; NUM_LANDMARKS],
}

impl Frame {
    pub fn landmark(&self, id: LandmarkId) -> &Landmark {
        &self.landmarks[id.index()]
    }

    pub fn landmark_mut(&mut self, id: LandmarkId) -> &mut Landmark {
        &mut self.landmarks[id.index()]
    }

    /// Applies `f` to the (x, y, z) of every landmark.
    pub fn map_coords(&mut self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) {
        for lm in &mut self.landmarks {
            let [x, y, z] = f([lm.x, lm.y, lm.z]);
            lm.x = x;
            lm.y = y;
            lm.z = z;
        }
    }

    /// Checks the per-frame invariants enforced on parse.
    pub fn validate(&self) -> Result<(), String> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err("image dimensions must be positive".into());
        }
        for (i, lm) in self.landmarks.iter().enumerate() {
            lm.check().map_err(|e| format!("landmark {i}: {e}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Front,
    Side,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::Male => "male",
            Sex::Female => "female",
        })
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::Front => "front",
            View::Side => "side",
        })
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "male" => Ok(Sex::Male),
            "female" => Ok(Sex::Female),
            other => Err(format!("unknown sex `{other}` (expected male|female)")),
        }
    }
}

impl FromStr for View {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "front" => Ok(View::Front),
            "side" => Ok(View::Side),
            other => Err(format!("unknown view `{other}` (expected front|side)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub sex: Sex,
    pub view: View,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkStream {
    pub frames: Vec<Frame>,
    pub meta: SubjectMeta,
}

impl LandmarkStream {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Returns a copy with `f` applied to every landmark coordinate.
    pub fn map_coords(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = self.clone();
        for frame in &mut out.frames {
            frame.map_coords(&f);
        }
        out
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: expected {NUM_LANDMARKS} landmarks, found {count}")]
    BadLandmarkCount { line: usize, count: usize },
    #[error("line {line}: t_ms not strictly increasing")]
    NonMonotoneTime { line: usize },
    #[error("line {line}: invalid frame: {reason}")]
    InvalidFrame { line: usize, reason: String },
    #[error("stream contains no frames")]
    EmptyStream,
    #[error("no subject metadata: pass sex/view or add a `#meta` header line")]
    MissingMeta,
}

impl ParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::MalformedLine { .. } => "MalformedLine",
            ParseError::BadLandmarkCount { .. } => "BadLandmarkCount",
            ParseError::NonMonotoneTime { .. } => "NonMonotoneTime",
            ParseError::InvalidFrame { .. } => "InvalidFrame",
            ParseError::EmptyStream => "EmptyStream",
            ParseError::MissingMeta => "MissingMeta",
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireLandmark {
    i: u8,
    x: f64,
    y: f64,
    z: f64,
    vis: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireFrame {
    v: u32,
    frame: u64,
    t_ms: i64,
    w: u32,
    h: u32,
    landmarks: Vec<WireLandmark>,
}

/// Parses a stream file.
///
/// `meta`, when given, takes precedence over any `#meta` header line. Lines
/// are numbered from 1 and blank lines are ignored.
pub fn parse_stream(input: &[u8], meta: Option<SubjectMeta>) -> Result<LandmarkStream, ParseError> {
    let text = std::str::from_utf8(input).map_err(|e| ParseError::MalformedLine {
        line: 1 + input[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        reason: "invalid UTF-8".into(),
    })?;

    let mut header_meta = None;
    let mut frames: Vec<Frame> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix(META_PREFIX) {
            let m: SubjectMeta = serde_json::from_str(rest).map_err(|e| ParseError::MalformedLine {
                line,
                reason: format!("bad #meta header: {e}"),
            })?;
            header_meta = Some(m);
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }

        let frame = parse_frame(trimmed, line)?;
        if let Some(prev) = frames.last() {
            if frame.t_ms <= prev.t_ms {
                return Err(ParseError::NonMonotoneTime { line });
            }
            if frame.frame_index <= prev.frame_index {
                return Err(ParseError::InvalidFrame {
                    line,
                    reason: "frame index not strictly increasing".into(),
                });
            }
        }
        frames.push(frame);
    }

    if frames.is_empty() {
        return Err(ParseError::EmptyStream);
    }
    let meta = meta.or(header_meta).ok_or(ParseError::MissingMeta)?;
    Ok(LandmarkStream { frames, meta })
}

fn parse_frame(text: &str, line: usize) -> Result<Frame, ParseError> {
    let wire: WireFrame = serde_json::from_str(text).map_err(|e| ParseError::MalformedLine {
        line,
        reason: e.to_string(),
    })?;
    if wire.v != SCHEMA_VERSION {
        return Err(ParseError::MalformedLine {
            line,
            reason: format!("unsupported schema version {}", wire.v),
        });
    }
    if wire.landmarks.len() != NUM_LANDMARKS {
        return Err(ParseError::BadLandmarkCount {
            line,
            count: wire.landmarks.len(),
        });
    }

    let mut landmarks = [Landmark::default(); NUM_LANDMARKS];
    for (expected, lm) in wire.landmarks.iter().enumerate() {
        if usize::from(lm.i) != expected {
            return Err(ParseError::InvalidFrame {
                line,
                reason: format!("landmark ids must be 0..=32 in order; found {} at position {expected}", lm.i),
            });
        }
        landmarks[expected] = Landmark::new(lm.x, lm.y, lm.z, lm.vis);
    }

    let frame = Frame {
        frame_index: wire.frame,
        t_ms: wire.t_ms,
        width_px: wire.w,
        height_px: wire.h,
        landmarks,
    };
    frame
        .validate()
        .map_err(|reason| ParseError::InvalidFrame { line, reason })?;
    Ok(frame)
}

fn frame_to_line(frame: &Frame) -> String {
    let wire = WireFrame {
        v: SCHEMA_VERSION,
        frame: frame.frame_index,
        t_ms: frame.t_ms,
        w: frame.width_px,
        h: frame.height_px,
        landmarks: frame
            .landmarks
            .iter()
            .enumerate()
            .map(|(i, lm)| WireLandmark {
                i: i as u8,
                x: lm.x,
                y: lm.y,
                z: lm.z,
                vis: lm.visibility,
            })
            .collect(),
    };
    // Serializing plain structs of numbers cannot fail.
    serde_json::to_string(&wire).expect("frame serialization")
}

/// Serializes frames only, one line each. Floats are written in shortest
/// round-trip form, so parsing the output reproduces every value exactly.
pub fn write_stream(stream: &LandmarkStream) -> Vec<u8> {
    let mut out = String::new();
    for frame in &stream.frames {
        out.push_str(&frame_to_line(frame));
        out.push('\n');
    }
    out.into_bytes()
}

/// Like [`write_stream`] but prefixed with a `#meta` header line.
pub fn write_stream_with_meta(stream: &LandmarkStream) -> Vec<u8> {
    let mut out = meta_header(&stream.meta).into_bytes();
    out.extend(write_stream(stream));
    out
}

pub fn meta_header(meta: &SubjectMeta) -> String {
    format!(
        "{META_PREFIX}{}\n",
        serde_json::to_string(meta).expect("meta serialization")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(index: u64, t_ms: i64) -> Frame {
        let mut landmarks = [Landmark::default(); NUM_LANDMARKS];
        for (i, lm) in landmarks.iter_mut().enumerate() {
            *lm = Landmark::new(0.3 + 0.01 * i as f64, 0.1 + 0.02 * i as f64, -0.01 * i as f64, 0.9);
        }
        Frame {
            frame_index: index,
            t_ms,
            width_px: 640,
            height_px: 480,
            landmarks,
        }
    }

    fn meta() -> SubjectMeta {
        SubjectMeta {
            sex: Sex::Female,
            view: View::Front,
        }
    }

    fn stream(n: u64) -> LandmarkStream {
        LandmarkStream {
            frames: (0..n).map(|i| frame(i, 33 * i as i64)).collect(),
            meta: meta(),
        }
    }

    #[test]
    fn two_lines_parse_to_two_frames() {
        let s = stream(2);
        let bytes = write_stream(&s);
        let parsed = parse_stream(&bytes, Some(meta())).unwrap();
        assert_eq!(parsed.len(), 2);
        assert!(parsed.frames.iter().all(|f| f.landmarks.len() == NUM_LANDMARKS));
        assert_eq!(parsed, s);
    }

    #[test]
    fn one_frame_is_one_line() {
        let bytes = write_stream(&stream(1));
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn short_landmark_array_is_rejected_with_line_number() {
        let s = stream(2);
        let text = String::from_utf8(write_stream(&s)).unwrap();
        let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
        let mut value: serde_json::Value = serde_json::from_str(&lines[1]).unwrap();
        value["landmarks"].as_array_mut().unwrap().pop();
        lines[1] = value.to_string();
        let err = parse_stream(lines.join("\n").as_bytes(), Some(meta())).unwrap_err();
        assert_eq!(err, ParseError::BadLandmarkCount { line: 2, count: 32 });
    }

    #[test]
    fn empty_input_is_empty_stream() {
        assert_eq!(parse_stream(b"", Some(meta())).unwrap_err(), ParseError::EmptyStream);
        assert_eq!(
            parse_stream(b"\n  \n", Some(meta())).unwrap_err(),
            ParseError::EmptyStream
        );
    }

    #[test]
    fn repeated_timestamp_is_rejected() {
        let mut s = stream(3);
        s.frames[2].t_ms = s.frames[1].t_ms;
        let err = parse_stream(&write_stream(&s), Some(meta())).unwrap_err();
        assert_eq!(err, ParseError::NonMonotoneTime { line: 3 });
    }

    #[test]
    fn garbage_line_is_malformed() {
        let mut bytes = write_stream(&stream(1));
        bytes.extend_from_slice(b"{not json}\n");
        match parse_stream(&bytes, Some(meta())).unwrap_err() {
            ParseError::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn out_of_range_coordinate_is_rejected() {
        let mut s = stream(1);
        s.frames[0].landmarks[5].x = 1.6;
        assert!(matches!(
            parse_stream(&write_stream(&s), Some(meta())),
            Err(ParseError::InvalidFrame { line: 1, .. })
        ));
    }

    #[test]
    fn visibility_outside_unit_interval_is_rejected() {
        let mut s = stream(1);
        s.frames[0].landmarks[0].visibility = 1.01;
        assert!(parse_stream(&write_stream(&s), Some(meta())).is_err());
    }

    #[test]
    fn meta_header_is_used_when_caller_gives_none() {
        let s = stream(2);
        let parsed = parse_stream(&write_stream_with_meta(&s), None).unwrap();
        assert_eq!(parsed.meta, meta());

        let override_meta = SubjectMeta {
            sex: Sex::Male,
            view: View::Side,
        };
        let parsed = parse_stream(&write_stream_with_meta(&s), Some(override_meta)).unwrap();
        assert_eq!(parsed.meta, override_meta);

        assert_eq!(
            parse_stream(&write_stream(&s), None).unwrap_err(),
            ParseError::MissingMeta
        );
    }

    #[test]
    fn landmark_names_parse_both_ways() {
        assert_eq!("left_ankle".parse::<LandmarkId>().unwrap(), LandmarkId::LEFT_ANKLE);
        assert_eq!("32".parse::<LandmarkId>().unwrap(), LandmarkId::RIGHT_FOOT_INDEX);
        assert!("33".parse::<LandmarkId>().is_err());
        assert!("tail".parse::<LandmarkId>().is_err());
        assert_eq!(LandmarkId::all().count(), NUM_LANDMARKS);
    }
}
