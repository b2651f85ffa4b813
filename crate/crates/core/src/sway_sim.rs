//! Synthetic Romberg trials with known weight distribution.
//!
//! A standing skeleton leans as a rigid inverted pendulum about the ankle
//! midpoint while the feet stay planted. Each frame the lean is chosen by
//! inverting the balance relations, so the skeleton's CoM produces the
//! requested lateral imbalance `A_lat sin(2 pi f_lat t)` and
//! anterior-posterior ratio `A_ap sin(2 pi f_ap t)` exactly.
//!
//! Body frame: X lateral (subject's left positive), Y vertical (down
//! positive, as in image rows), Z anterior-posterior (anterior negative).
//! Lengths are fractions of standing height, scaled by `subject_height`.

use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biomech::{mass_table, Segment, SegmentMassTable};
use crate::landmark_io::{
    Frame, Landmark, LandmarkId, LandmarkStream, Sex, SubjectMeta, View, NUM_LANDMARKS,
};

const IMAGE_PX: u32 = 1080;
const IMAGE_CENTER_X: f64 = 0.5;
const VISIBILITY: f64 = 0.99;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

impl SimError {
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::InfeasibleScenario(_) => "InfeasibleScenario",
            SimError::InvalidScenario(_) => "InvalidScenario",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sway {
    /// Peak imbalance, percent of body weight.
    pub amplitude_pct: f64,
    pub frequency_hz: f64,
}

impl Sway {
    pub const NONE: Sway = Sway {
        amplitude_pct: 0.0,
        frequency_hz: 0.2,
    };

    fn at(&self, t: f64) -> f64 {
        self.amplitude_pct * (std::f64::consts::TAU * self.frequency_hz * t).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwayScenario {
    pub sex: Sex,
    pub view: View,
    pub duration_s: f64,
    pub fps: f64,
    /// Distance between the two feet's support points, normalized units.
    pub stance_width: f64,
    /// Standing height, normalized units.
    pub subject_height: f64,
    pub lateral_sway: Sway,
    pub ap_sway: Sway,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SwayScenario {
    fn default() -> Self {
        Self {
            sex: Sex::Male,
            view: View::Front,
            duration_s: 10.0,
            fps: 30.0,
            stance_width: 0.1,
            subject_height: 0.8,
            lateral_sway: Sway {
                amplitude_pct: 0.0,
                frequency_hz: 0.25,
            },
            ap_sway: Sway::NONE,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

impl SwayScenario {
    pub fn n_frames(&self) -> usize {
        (self.duration_s * self.fps).round() as usize
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |m: String| Err(SimError::InvalidScenario(m));
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return invalid(format!("fps must be positive, got {}", self.fps));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return invalid(format!("duration_s must be positive, got {}", self.duration_s));
        }
        if self.n_frames() == 0 {
            return invalid("scenario produces no frames".into());
        }
        if !(self.stance_width > 0.0) {
            return invalid(format!("stance_width must be positive, got {}", self.stance_width));
        }
        if !(self.subject_height > 0.0 && self.subject_height <= 1.0) {
            return invalid(format!(
                "subject_height must be in (0, 1], got {}",
                self.subject_height
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return invalid(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        for (name, sway) in [("lateral", &self.lateral_sway), ("ap", &self.ap_sway)] {
            if !(sway.amplitude_pct >= 0.0) {
                return invalid(format!("{name} amplitude must be >= 0"));
            }
            if !sway.frequency_hz.is_finite() {
                return invalid(format!("{name} frequency must be finite"));
            }
            if sway.amplitude_pct > 100.0 {
                return Err(SimError::InfeasibleScenario(format!(
                    "{name} amplitude {}% exceeds 100% of body weight",
                    sway.amplitude_pct
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthSample {
    pub frame_index: u64,
    pub t_ms: i64,
    pub lateral_pct: f64,
    pub ap_pct: f64,
    /// Noiseless CoM in image coordinates.
    pub com: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub samples: Vec<TruthSample>,
}

impl GroundTruth {
    pub fn max_lateral(&self) -> f64 {
        self.samples.iter().map(|s| s.lateral_pct).fold(0.0, f64::max)
    }

    pub fn max_ap(&self) -> f64 {
        self.samples.iter().map(|s| s.ap_pct).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRUTH_CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{:.6},{:.6}\n",
                s.frame_index, s.t_ms, s.lateral_pct, s.ap_pct
            ));
        }
        out
    }
}

pub const TRUTH_CSV_HEADER: &str = "frame,t_ms,true_lateral_pct,true_ap_pct";

/// Upright pose in body coordinates. Heights are fractions of stature above
/// the floor; lateral offsets and depths are fractions of stature.
fn canonical_pose(height: f64, stance_width: f64) -> [Vector3<f64>; NUM_LANDMARKS] {
    let half_stance = 0.5 * stance_width;
    let at = |x: f64, up: f64, z: f64| Vector3::new(x * height, -up * height, z * height);
    let foot = |side: f64, up: f64, z: f64| Vector3::new(side * half_stance, -up * height, z * height);
    let knee_x = half_stance / height + 0.01;

    let mut pose = [Vector3::zeros(); NUM_LANDMARKS];
    let mut set = |id: LandmarkId, p: Vector3<f64>| pose[id.index()] = p;
    use LandmarkId as L;
    set(L::NOSE, at(0.0, 0.930, -0.055));
    set(L::LEFT_EYE_INNER, at(0.012, 0.942, -0.045));
    set(L::LEFT_EYE, at(0.020, 0.943, -0.042));
    set(L::LEFT_EYE_OUTER, at(0.028, 0.942, -0.038));
    set(L::RIGHT_EYE_INNER, at(-0.012, 0.942, -0.045));
    set(L::RIGHT_EYE, at(-0.020, 0.943, -0.042));
    set(L::RIGHT_EYE_OUTER, at(-0.028, 0.942, -0.038));
    set(L::LEFT_EAR, at(0.045, 0.930, 0.0));
    set(L::RIGHT_EAR, at(-0.045, 0.930, 0.0));
    set(L::MOUTH_LEFT, at(0.015, 0.905, -0.045));
    set(L::MOUTH_RIGHT, at(-0.015, 0.905, -0.045));
    set(L::LEFT_SHOULDER, at(0.130, 0.818, 0.0));
    set(L::RIGHT_SHOULDER, at(-0.130, 0.818, 0.0));
    set(L::LEFT_ELBOW, at(0.150, 0.630, 0.0));
    set(L::RIGHT_ELBOW, at(-0.150, 0.630, 0.0));
    set(L::LEFT_WRIST, at(0.150, 0.485, 0.0));
    set(L::RIGHT_WRIST, at(-0.150, 0.485, 0.0));
    set(L::LEFT_PINKY, at(0.160, 0.440, 0.010));
    set(L::RIGHT_PINKY, at(-0.160, 0.440, 0.010));
    set(L::LEFT_INDEX, at(0.150, 0.435, -0.010));
    set(L::RIGHT_INDEX, at(-0.150, 0.435, -0.010));
    set(L::LEFT_THUMB, at(0.140, 0.455, -0.015));
    set(L::RIGHT_THUMB, at(-0.140, 0.455, -0.015));
    set(L::LEFT_HIP, at(0.090, 0.530, 0.0));
    set(L::RIGHT_HIP, at(-0.090, 0.530, 0.0));
    set(L::LEFT_KNEE, at(knee_x, 0.285, 0.0));
    set(L::RIGHT_KNEE, at(-knee_x, 0.285, 0.0));
    set(L::LEFT_ANKLE, foot(1.0, 0.039, 0.0));
    set(L::RIGHT_ANKLE, foot(-1.0, 0.039, 0.0));
    set(L::LEFT_HEEL, foot(1.0, 0.0, 0.035));
    set(L::RIGHT_HEEL, foot(-1.0, 0.0, 0.035));
    set(L::LEFT_FOOT_INDEX, foot(1.0, 0.0, -0.110));
    set(L::RIGHT_FOOT_INDEX, foot(-1.0, 0.0, -0.110));
    pose
}

fn is_planted(id: LandmarkId) -> bool {
    id.index() >= LandmarkId::LEFT_ANKLE.index()
}

/// Body-frame pose with the table's CoM helpers.
struct Skeleton {
    pose: [Vector3<f64>; NUM_LANDMARKS],
    pivot: Vector3<f64>,
    /// Weight fraction of the planted feet and their weighted position.
    foot_weight: f64,
    foot_point: Vector3<f64>,
    /// Canonical CoM of the leaning part, relative to the pivot.
    upper_offset: Vector3<f64>,
}

impl Skeleton {
    fn new(scenario: &SwayScenario, table: &SegmentMassTable) -> Self {
        let pose = canonical_pose(scenario.subject_height, scenario.stance_width);
        let pivot = 0.5 * (pose[LandmarkId::LEFT_ANKLE.index()] + pose[LandmarkId::RIGHT_ANKLE.index()]);
        let frame = body_frame(&pose);

        let mut foot_weight = 0.0;
        let mut foot_point = Vector3::zeros();
        let mut upper = Vector3::zeros();
        for s in &table.segments {
            let p = Vector3::from(table.segment_position(&frame, s.segment));
            if matches!(s.segment, Segment::FootL | Segment::FootR) {
                foot_weight += s.weight;
                foot_point += s.weight * p;
            } else {
                upper += s.weight * p;
            }
        }
        foot_point /= foot_weight;
        upper /= 1.0 - foot_weight;

        Self {
            pose,
            pivot,
            foot_weight,
            foot_point,
            upper_offset: upper - pivot,
        }
    }

    fn com(&self, rotation: &UnitQuaternion<f64>) -> Vector3<f64> {
        self.foot_weight * self.foot_point
            + (1.0 - self.foot_weight) * (self.pivot + rotation * self.upper_offset)
    }

    /// Finds the lean whose CoM sits at lateral offset `com_x` from the
    /// support midpoint and has depth/height ratio `ap_ratio` relative to
    /// the ankle midpoint.
    fn solve_lean(&self, com_x: f64, ap_ratio: f64) -> Result<UnitQuaternion<f64>, SimError> {
        let k = 1.0 - self.foot_weight;
        let (wf, f, p) = (self.foot_weight, self.foot_point, self.pivot);
        let length = self.upper_offset.norm();

        // com = wf f + k (p + v) with |v| = length. Unknown: com_y = y.
        // com_z - p_z = -ap_ratio (p_y - y).
        let vx = (com_x - wf * f.x) / k - p.x;
        // v_y = a_y y + b_y,  v_z = a_z y + b_z
        let (a_y, b_y) = (1.0 / k, -wf * f.y / k - p.y);
        let (a_z, b_z) = (ap_ratio / k, (p.z - ap_ratio * p.y - wf * f.z) / k - p.z);
        let qa = a_y * a_y + a_z * a_z;
        let qb = 2.0 * (a_y * b_y + a_z * b_z);
        let qc = b_y * b_y + b_z * b_z + vx * vx - length * length;
        let disc = qb * qb - 4.0 * qa * qc;
        if !(disc >= 0.0) {
            return Err(SimError::InfeasibleScenario(format!(
                "no lean reaches lateral offset {com_x:.6} with AP ratio {ap_ratio:.6}"
            )));
        }
        // Upright branch: the CoM above the pivot (smaller y).
        let y = (-qb - disc.sqrt()) / (2.0 * qa);
        let v = Vector3::new(vx, a_y * y + b_y, a_z * y + b_z);
        if v.y >= 0.0 {
            return Err(SimError::InfeasibleScenario(
                "lean would put the CoM below the ankles".into(),
            ));
        }
        UnitQuaternion::rotation_between(&self.upper_offset, &v).ok_or_else(|| {
            SimError::InfeasibleScenario("lean rotation is undefined".into())
        })
    }

    fn posed(&self, rotation: &UnitQuaternion<f64>) -> [Vector3<f64>; NUM_LANDMARKS] {
        std::array::from_fn(|i| {
            let p = self.pose[i];
            let id = LandmarkId::new(i as u8).expect("index in range");
            if is_planted(id) {
                p
            } else {
                self.pivot + rotation * (p - self.pivot)
            }
        })
    }
}

fn body_frame(pose: &[Vector3<f64>; NUM_LANDMARKS]) -> Frame {
    Frame {
        frame_index: 0,
        t_ms: 0,
        width_px: IMAGE_PX,
        height_px: IMAGE_PX,
        landmarks: std::array::from_fn(|i| Landmark::new(pose[i].x, pose[i].y, pose[i].z, VISIBILITY)),
    }
}

/// Maps a body-frame point into normalized image coordinates.
fn to_image(p: &Vector3<f64>, view: View, floor_y: f64) -> [f64; 3] {
    match view {
        View::Front => [IMAGE_CENTER_X + p.x, floor_y + p.y, p.z],
        // Subject faces image-left; lateral becomes depth.
        View::Side => [IMAGE_CENTER_X + p.z, floor_y + p.y, p.x],
    }
}

fn t_ms_of(i: usize, fps: f64) -> i64 {
    (i as f64 * 1000.0 / fps).round() as i64
}

/// Generates a noisy landmark stream and its noiseless ground truth.
pub fn generate(scenario: &SwayScenario) -> Result<(LandmarkStream, GroundTruth), SimError> {
    scenario.validate()?;
    if 1000.0 / scenario.fps < 1.0 {
        return Err(SimError::InvalidScenario(
            "fps above 1000 cannot have strictly increasing millisecond timestamps".into(),
        ));
    }
    let table = mass_table(scenario.sex);
    let skeleton = Skeleton::new(scenario, &table);
    let floor_y = 0.5 + 0.5 * scenario.subject_height;
    let support_half = 0.5 * scenario.stance_width;

    let n = scenario.n_frames();
    let mut frames = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for i in 0..n {
        let t_ms = t_ms_of(i, scenario.fps);
        let t = t_ms as f64 / 1000.0;
        let lateral = scenario.lateral_sway.at(t);
        let ap = scenario.ap_sway.at(t);

        let com_x = lateral / 100.0 * support_half;
        let rotation = skeleton.solve_lean(com_x, ap / 100.0)?;
        let posed = skeleton.posed(&rotation);
        let com = skeleton.com(&rotation);

        // Truth from the balance relations on the designed CoM.
        let d_left = com.x + support_half;
        let d_right = support_half - com.x;
        let lateral_pct = 100.0 * (d_right - d_left).abs() / (d_left + d_right);
        let ap_pct = 100.0 * (com.z - skeleton.pivot.z).abs() / (skeleton.pivot.y - com.y);

        let landmarks = std::array::from_fn(|j| {
            let [x, y, z] = to_image(&posed[j], scenario.view, floor_y);
            Landmark::new(x, y, z, VISIBILITY)
        });
        frames.push(Frame {
            frame_index: i as u64,
            t_ms,
            width_px: IMAGE_PX,
            height_px: IMAGE_PX,
            landmarks,
        });
        truth.push(TruthSample {
            frame_index: i as u64,
            t_ms,
            lateral_pct,
            ap_pct,
            com: to_image(&com, scenario.view, floor_y),
        });
    }

    let stream = LandmarkStream {
        frames,
        meta: SubjectMeta {
            sex: scenario.sex,
            view: scenario.view,
        },
    };
    let stream = inject_noise(&stream, scenario.noise_sigma, scenario.seed);
    Ok((stream, GroundTruth { samples: truth }))
}

/// Adds i.i.d. `N(0, sigma^2)` to x, y and z of every landmark.
pub fn inject_noise(stream: &LandmarkStream, sigma: f64, seed: u64) -> LandmarkStream {
    if sigma == 0.0 {
        return stream.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = stream.clone();
    for frame in &mut out.frames {
        for lm in &mut frame.landmarks {
            lm.x += normal.sample(&mut rng);
            lm.y += normal.sample(&mut rng);
            lm.z += normal.sample(&mut rng);
        }
    }
    out
}
