//! Landmark denoising: a per-joint constant-velocity Kalman filter on the
//! image-plane position, and an exponential moving average for the CoM.

use std::collections::BTreeSet;

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Matrix4x2, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::landmark_io::{LandmarkId, LandmarkStream};

/// Innovation covariances with a worse condition number are refused.
pub const MAX_INNOVATION_CONDITION: f64 = 1e12;

/// Initial covariance diagonal: position variance, then velocity variance.
const INIT_POSITION_VAR: f64 = 1e-2;
const INIT_VELOCITY_VAR: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("filter state became non-finite")]
    NonFiniteState,
    #[error("innovation covariance is singular (condition {condition:e})")]
    SingularInnovation { condition: f64 },
    #[error("negative time step {dt} s")]
    NegativeTimeStep { dt: f64 },
    #[error("invalid filter config: {0}")]
    InvalidConfig(String),
    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: u64,
        #[source]
        source: Box<FilterError>,
    },
}

/// Position/velocity estimate for one joint with its 4x4 covariance, state
/// order `[x, y, vx, vy]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub position: Vector2<f64>,
    pub velocity: Vector2<f64>,
    pub covariance: Matrix4<f64>,
}

impl KalmanState {
    pub fn new(position: [f64; 2], velocity: [f64; 2], covariance: Matrix4<f64>) -> Self {
        Self {
            position: Vector2::from(position),
            velocity: Vector2::from(velocity),
            covariance,
        }
    }

    /// Starts a track at a measurement with zero velocity and a wide prior.
    pub fn from_measurement(position: [f64; 2]) -> Self {
        Self::new(
            position,
            [0.0, 0.0],
            Matrix4::from_diagonal(&Vector4::new(
                INIT_POSITION_VAR,
                INIT_POSITION_VAR,
                INIT_VELOCITY_VAR,
                INIT_VELOCITY_VAR,
            )),
        )
    }

    fn vector(&self) -> Vector4<f64> {
        Vector4::new(self.position.x, self.position.y, self.velocity.x, self.velocity.y)
    }

    fn from_parts(x: Vector4<f64>, covariance: Matrix4<f64>) -> Result<Self, FilterError> {
        if x.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(FilterError::NonFiniteState);
        }
        Ok(Self {
            position: Vector2::new(x[0], x[1]),
            velocity: Vector2::new(x[2], x[3]),
            covariance,
        })
    }
}

/// Constant-velocity transition for a step of `dt` seconds.
pub fn transition(dt: f64) -> Matrix4<f64> {
    let mut f = Matrix4::identity();
    f[(0, 2)] = dt;
    f[(1, 3)] = dt;
    f
}

/// Process noise `q * G(dt)`, with per-axis block
/// `[dt^4/4, dt^3/2; dt^3/2, dt^2]` (white acceleration held over the step).
pub fn process_noise(q: f64, dt: f64) -> Matrix4<f64> {
    let dt2 = dt * dt;
    let pp = q * dt2 * dt2 / 4.0;
    let pv = q * dt2 * dt / 2.0;
    let vv = q * dt2;
    let mut m = Matrix4::zeros();
    for axis in 0..2 {
        let (p, v) = (axis, axis + 2);
        m[(p, p)] = pp;
        m[(p, v)] = pv;
        m[(v, p)] = pv;
        m[(v, v)] = vv;
    }
    m
}

fn observation() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

/// Prediction step. There is no control input.
pub fn kf_predict(state: &KalmanState, dt: f64, q: f64) -> Result<KalmanState, FilterError> {
    if dt < 0.0 {
        return Err(FilterError::NegativeTimeStep { dt });
    }
    let f = transition(dt);
    let x = f * state.vector();
    let p = f * state.covariance * f.transpose() + process_noise(q, dt);
    KalmanState::from_parts(x, symmetrize(p))
}

/// Position-only measurement update with isotropic measurement variance `r`.
pub fn kf_update(
    predicted: &KalmanState,
    measurement: [f64; 2],
    r: f64,
) -> Result<KalmanState, FilterError> {
    let h = observation();
    let p = predicted.covariance;
    let s = h * p * h.transpose() + Matrix2::identity() * r;

    let condition = condition_number_sym2(&s);
    if !(condition <= MAX_INNOVATION_CONDITION) {
        return Err(FilterError::SingularInnovation { condition });
    }
    let s_inv = s
        .try_inverse()
        .ok_or(FilterError::SingularInnovation { condition })?;

    let k: Matrix4x2<f64> = p * h.transpose() * s_inv;
    let x = predicted.vector();
    let innovation = Vector2::from(measurement) - h * x;
    let x_post = x + k * innovation;

    // Joseph form: algebraically (I - KH)P, but keeps P symmetric PSD under
    // rounding.
    let i_kh = Matrix4::identity() - k * h;
    let p_post = i_kh * p * i_kh.transpose() + k * k.transpose() * r;
    KalmanState::from_parts(x_post, symmetrize(p_post))
}

fn symmetrize(p: Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Condition number of a symmetric 2x2 matrix; infinite if not positive
/// definite.
fn condition_number_sym2(s: &Matrix2<f64>) -> f64 {
    let (a, b, d) = (s[(0, 0)], 0.5 * (s[(0, 1)] + s[(1, 0)]), s[(1, 1)]);
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let (hi, lo) = (mean + radius, mean - radius);
    if lo <= 0.0 || !hi.is_finite() {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Joints filtered by default: the feet and wrists, which jitter the most.
pub fn default_filtered_joints() -> BTreeSet<LandmarkId> {
    [
        LandmarkId::LEFT_WRIST,
        LandmarkId::RIGHT_WRIST,
        LandmarkId::LEFT_ANKLE,
        LandmarkId::RIGHT_ANKLE,
        LandmarkId::LEFT_HEEL,
        LandmarkId::RIGHT_HEEL,
        LandmarkId::LEFT_FOOT_INDEX,
        LandmarkId::RIGHT_FOOT_INDEX,
    ]
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Process-noise intensity.
    pub q: f64,
    /// Measurement-noise variance, normalized units squared.
    pub r: f64,
    pub filtered_joints: BTreeSet<LandmarkId>,
    /// EMA smoothing factor in (0, 1].
    pub alpha: f64,
    /// Measurements below this visibility are replaced by the prediction.
    pub min_visibility: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            q: 0.5,
            r: 2.5e-5,
            filtered_joints: default_filtered_joints(),
            alpha: 0.9,
            min_visibility: 0.5,
        }
    }
}

impl FilterConfig {
    /// Same EMA factor, but no Kalman filtering of any joint.
    pub fn without_kalman(mut self) -> Self {
        self.filtered_joints.clear();
        self
    }

    pub fn validate(&self) -> Result<(), FilterError> {
        let bad = |msg: String| Err(FilterError::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must be in (0, 1], got {}", self.alpha));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("r must be positive, got {}", self.r));
        }
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return bad(format!("q must be non-negative, got {}", self.q));
        }
        if !(0.0..=1.0).contains(&self.min_visibility) {
            return bad(format!("min_visibility must be in [0, 1], got {}", self.min_visibility));
        }
        Ok(())
    }
}

fn step_seconds(prev_ms: i64, next_ms: i64) -> f64 {
    (next_ms - prev_ms) as f64 / 1000.0
}

/// Runs the Kalman filter over one joint's image-plane track.
///
/// The first frame seeds the track. Later frames whose visibility is below
/// `min_visibility` get the prediction only.
pub fn filter_joint_series(
    stream: &LandmarkStream,
    joint: LandmarkId,
    config: &FilterConfig,
) -> Result<Vec<[f64; 2]>, FilterError> {
    config.validate()?;
    let mut frames = stream.frames.iter();
    let Some(first) = frames.next() else {
        return Ok(Vec::new());
    };

    let mut state = KalmanState::from_measurement(first.landmark(joint).xy());
    let mut prev_t = first.t_ms;
    let mut out = Vec::with_capacity(stream.len());
    out.push([state.position.x, state.position.y]);

    for frame in frames {
        let at = |source| FilterError::AtFrame {
            frame: frame.frame_index,
            source: Box::new(source),
        };
        let lm = frame.landmark(joint);
        state = kf_predict(&state, step_seconds(prev_t, frame.t_ms), config.q).map_err(at)?;
        if lm.visibility >= config.min_visibility {
            state = kf_update(&state, lm.xy(), config.r).map_err(at)?;
        }
        prev_t = frame.t_ms;
        out.push([state.position.x, state.position.y]);
    }
    Ok(out)
}

/// Returns a copy of the stream with x/y of every configured joint replaced
/// by its filtered track. Depth and visibility are left untouched.
pub fn filter_stream(
    stream: &LandmarkStream,
    config: &FilterConfig,
) -> Result<LandmarkStream, FilterError> {
    config.validate()?;
    let mut out = stream.clone();
    for &joint in &config.filtered_joints {
        let track = filter_joint_series(stream, joint, config)?;
        for (frame, [x, y]) in out.frames.iter_mut().zip(track) {
            let lm = frame.landmark_mut(joint);
            lm.x = x;
            lm.y = y;
        }
    }
    Ok(out)
}

/// One EMA step, componentwise: `alpha * raw + (1 - alpha) * prev`.
///
/// Evaluated as `prev + alpha * (raw - prev)` so a constant input stays
/// bit-exact.
pub fn ema_step<const N: usize>(prev: [f64; N], raw: [f64; N], alpha: f64) -> [f64; N] {
    if alpha == 1.0 {
        return raw;
    }
    std::array::from_fn(|i| prev[i] + alpha * (raw[i] - prev[i]))
}

/// Streaming EMA seeded by its first sample.
#[derive(Debug, Clone)]
pub struct Ema<const N: usize> {
    alpha: f64,
    value: Option<[f64; N]>,
}

impl<const N: usize> Ema<N> {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, value: None }
    }

    pub fn push(&mut self, raw: [f64; N]) -> [f64; N] {
        let next = match self.value {
            None => raw,
            Some(prev) => ema_step(prev, raw, self.alpha),
        };
        self.value = Some(next);
        next
    }

    pub fn value(&self) -> Option<[f64; N]> {
        self.value
    }
}
