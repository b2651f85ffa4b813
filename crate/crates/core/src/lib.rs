//! Objective Romberg test analysis from pose-landmark streams.
//!
//! The pipeline runs per frame: Kalman-filter the jittery joints, estimate
//! the center of mass from segment mass fractions, smooth it with an EMA,
//! and convert its position relative to the feet into a relative weight
//! distribution (RWD) on the lateral and anterior-posterior axes. The peak
//! RWD on each axis is then classified against normative bands.
//!
//! [`sway_sim`] generates synthetic trials with known weight distribution
//! and [`evaluation`] scores pipeline output against them or against
//! dual-scale readings.

// `!(x > y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod biomech;
pub mod cli;
pub mod diagnosis;
pub mod evaluation;
pub mod filtering;
pub mod landmark_io;
pub mod pipeline;
pub mod rwd;
pub mod sway_sim;

pub use biomech::{compute_com, mass_table, ComSample, Segment, SegmentMassTable, TrunkModel};
pub use diagnosis::{diagnose, Diagnosis, Thresholds, Verdict};
pub use filtering::FilterConfig;
pub use landmark_io::{
    parse_stream, write_stream, Frame, Landmark, LandmarkId, LandmarkStream, Sex, SubjectMeta, View,
};
pub use pipeline::{analyze, Analysis, PipelineConfig};
pub use rwd::{ap_rwd, lateral_rwd, rwd_series, AxisMapping, DegeneratePolicy, RwdSample, RwdSeries};
pub use sway_sim::{generate, GroundTruth, SwayScenario};
