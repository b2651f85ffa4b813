//! Acceptance suite. Each test prints one PASS/FAIL line and then asserts.
//!
//! Lines go straight to the stderr handle so they show up even when the
//! harness captures test output.

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{Matrix2, UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use romberg::biomech::{SegmentMassTable, TrunkModel};
use romberg::filtering::{kf_predict, kf_update, KalmanState};
use romberg::landmark_io::{write_stream_with_meta, NUM_LANDMARKS};
use romberg::sway_sim::Sway;
use romberg::*;

fn report(id: u32, name: &str, pass: bool, detail: String, elapsed: Duration, budget_s: f64) {
    let within = elapsed.as_secs_f64() < budget_s;
    let status = if pass && within { "PASS" } else { "FAIL" };
    let line = format!(
        "acceptance {id} {name}: {status} ({detail}; {:.3}s of {budget_s}s)\n",
        elapsed.as_secs_f64()
    );
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {id} failed: {detail}");
    assert!(within, "criterion {id} over its time budget");
}

/// Solves N_l + N_r = 1, N_l d_l = N_r d_r as a linear system.
fn torque_balance_oracle(com_x: f64, left_x: f64, right_x: f64) -> f64 {
    let d_l = com_x - left_x;
    let d_r = right_x - com_x;
    let a = Matrix2::new(1.0, 1.0, d_l, -d_r);
    let n = a.lu().solve(&Vector2::new(1.0, 0.0)).expect("non-singular");
    100.0 * (n[0] - n[1]).abs()
}

#[test]
fn criterion_1_torque_balance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let left = rng.random_range(-1.0..1.0);
        let width = rng.random_range(1e-3..1.0);
        let right = left + width;
        let com = left + width * rng.random_range(0.0..=1.0);
        let got = lateral_rwd(com, left, right).unwrap();
        let want = torque_balance_oracle(com, left, right);
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }
    report(
        1,
        "torque-balance oracle",
        worst <= 1e-9,
        format!("max relative error {worst:.3e}, tolerance 1e-9"),
        start.elapsed(),
        1.0,
    );
}

#[test]
fn criterion_2_ap_identity() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 10_000;
    let (mut worst_literal, mut worst_identity) = (0.0f64, 0.0f64);
    for k in 0..n {
        let ratio = 10.0 * k as f64 / (n - 1) as f64;
        let d_v = rng.random_range(0.05..2.0);
        let d_h = ratio * d_v;
        let got = ap_rwd(d_h, d_v).unwrap();
        let literal = 100.0 * (d_h / d_v).atan().tan();
        worst_literal = worst_literal.max((got - literal).abs());
        let identity = 100.0 * d_h / d_v;
        worst_identity = worst_identity.max((got - identity).abs() / identity.max(1.0));
    }
    report(
        2,
        "AP identity",
        worst_literal <= 1e-12 && worst_identity <= 1e-12,
        format!(
            "max |ap - 100 tan(atan r)| {worst_literal:.3e}, max relative gap to 100 r {worst_identity:.3e}, tolerance 1e-12"
        ),
        start.elapsed(),
        1.0,
    );
}

fn invariance_streams() -> Vec<LandmarkStream> {
    let mut out = Vec::new();
    for (view, seed) in [(View::Front, 3), (View::Side, 4)] {
        for sex in [Sex::Male, Sex::Female] {
            let scenario = SwayScenario {
                sex,
                view,
                duration_s: 4.0,
                lateral_sway: Sway { amplitude_pct: 8.0, frequency_hz: 0.3 },
                ap_sway: Sway { amplitude_pct: 11.0, frequency_hz: 0.2 },
                noise_sigma: 0.002,
                seed,
                ..Default::default()
            };
            out.push(generate(&scenario).unwrap().0);
        }
    }
    out
}

type CoordMap = Box<dyn Fn([f64; 3]) -> [f64; 3]>;

fn option_drift(a: Option<f64>, b: Option<f64>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => (a - b).abs(),
        (None, None) => 0.0,
        _ => f64::INFINITY,
    }
}

#[test]
fn criterion_3_invariance() {
    let start = Instant::now();
    let cfg = PipelineConfig::default();
    let mut worst = 0.0f64;
    let mut mismatches = 0usize;
    let perturbations: Vec<(String, CoordMap)> = vec![
        ("scale 0.1".into(), Box::new(|p: [f64; 3]| p.map(|v| 0.1 * v))),
        ("scale 1".into(), Box::new(|p: [f64; 3]| p.map(|v| v))),
        ("scale 7.3".into(), Box::new(|p: [f64; 3]| p.map(|v| 7.3 * v))),
        ("translate".into(), Box::new(|[x, y, z]: [f64; 3]| [x + 0.37, y - 0.21, z + 0.05])),
    ];
    for stream in invariance_streams() {
        let base = analyze(&stream, &cfg).unwrap();
        for (_, f) in &perturbations {
            let moved = analyze(&stream.map_coords(f), &cfg).unwrap();
            if moved.series.samples.len() != base.series.samples.len() {
                mismatches += 1;
                continue;
            }
            for (a, b) in base.series.samples.iter().zip(&moved.series.samples) {
                worst = worst
                    .max(option_drift(a.lateral_pct, b.lateral_pct))
                    .max(option_drift(a.ap_pct, b.ap_pct));
                if a.frame_index != b.frame_index || a.t_ms != b.t_ms {
                    mismatches += 1;
                }
            }
            let (d, e) = (&base.diagnosis, &moved.diagnosis);
            worst = worst
                .max(option_drift(d.lateral.max_pct, e.lateral.max_pct))
                .max(option_drift(d.ap.max_pct, e.ap.max_pct));
            if d.lateral.verdict != e.lateral.verdict
                || d.ap.verdict != e.ap.verdict
                || d.overall != e.overall
                || d.n_frames_used != e.n_frames_used
                || d.n_frames_skipped != e.n_frames_skipped
            {
                mismatches += 1;
            }
        }
    }
    let labels: Vec<_> = perturbations.iter().map(|(l, _)| l.as_str()).collect();
    report(
        3,
        "scale/translation invariance",
        worst <= 1e-12 && mismatches == 0,
        format!(
            "[{}] max drift {worst:.3e}, structural mismatches {mismatches}, tolerance 1e-12",
            labels.join(", ")
        ),
        start.elapsed(),
        5.0,
    );
}

#[test]
fn criterion_4_end_to_end_mae() {
    let start = Instant::now();
    let mut amplitudes = ChaCha8Rng::seed_from_u64(4);
    let cfg = PipelineConfig::default();
    let mut errors = Vec::new();
    for seed in 0..50u64 {
        let scenario = SwayScenario {
            duration_s: 10.0,
            fps: 30.0,
            lateral_sway: Sway {
                amplitude_pct: amplitudes.random_range(0.0..15.0),
                frequency_hz: 0.25,
            },
            noise_sigma: 0.002,
            seed,
            ..Default::default()
        };
        let (stream, truth) = generate(&scenario).unwrap();
        let got = analyze(&stream, &cfg).unwrap().diagnosis.lateral.max_pct.unwrap();
        errors.push(got - truth.max_lateral());
    }
    let mae = errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64;
    let bias = errors.iter().sum::<f64>() / errors.len() as f64;
    report(
        4,
        "end-to-end synthetic MAE",
        mae <= 0.5,
        format!("MAE {mae:.4}% (mean signed error {bias:+.4}%), limit 0.5% over 50 trials"),
        start.elapsed(),
        30.0,
    );
}

#[test]
fn criterion_5_filter_efficacy() {
    let start = Instant::now();
    let sigma = 0.005;
    let (q, r) = (0.5, sigma * sigma);
    let dt = 1.0 / 30.0;
    let n = 300;
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut ratios = Vec::new();
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p0 = [rng.random_range(0.3..0.7), rng.random_range(0.3..0.7)];
        let v = [rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)];
        let truth: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                [p0[0] + v[0] * t, p0[1] + v[1] * t]
            })
            .collect();
        let raw: Vec<[f64; 2]> = truth
            .iter()
            .map(|p| [p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng)])
            .collect();
        let mut state = KalmanState::from_measurement(raw[0]);
        let mut filtered = vec![raw[0]];
        for z in &raw[1..] {
            let pred = kf_predict(&state, dt, q).unwrap();
            state = kf_update(&pred, *z, r).unwrap();
            filtered.push([state.position.x, state.position.y]);
        }
        let rmse = |s: &[[f64; 2]]| {
            let sq: f64 = s[10..]
                .iter()
                .zip(&truth[10..])
                .map(|(a, b)| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2))
                .sum();
            (sq / (n - 10) as f64).sqrt()
        };
        ratios.push(rmse(&filtered) / rmse(&raw));
    }
    let worst = ratios.iter().cloned().fold(0.0, f64::max);
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let over = ratios.iter().filter(|&&x| x > 0.6).count();
    report(
        5,
        "Kalman filter efficacy",
        over == 0,
        format!(
            "RMSE ratio mean {mean:.4}, worst {worst:.4}, {over}/100 seeds above 0.6"
        ),
        start.elapsed(),
        10.0,
    );
}

#[test]
fn criterion_6_diagnosis_thresholds() {
    let start = Instant::now();
    let cfg = PipelineConfig::default();
    let expected = [Verdict::Negative, Verdict::Borderline, Verdict::Positive];
    let mut wrong = Vec::new();
    let mut seen = Vec::new();
    for (amp, want) in [3.0, 6.5, 10.0].into_iter().zip(expected) {
        let scenario = SwayScenario {
            lateral_sway: Sway { amplitude_pct: amp, frequency_hz: 0.25 },
            ..Default::default()
        };
        let (stream, truth) = generate(&scenario).unwrap();
        let d = analyze(&stream, &cfg).unwrap().diagnosis;
        seen.push(format!("lateral {:.3}->{}", truth.max_lateral(), d.lateral.verdict));
        if d.lateral.verdict != want {
            wrong.push(format!("lateral {amp}"));
        }
    }
    for view in [View::Front, View::Side] {
        for (amp, want) in [5.0, 13.0, 16.0].into_iter().zip(expected) {
            let scenario = SwayScenario {
                view,
                ap_sway: Sway { amplitude_pct: amp, frequency_hz: 0.2 },
                ..Default::default()
            };
            let (stream, truth) = generate(&scenario).unwrap();
            let d = analyze(&stream, &cfg).unwrap().diagnosis;
            seen.push(format!("ap/{view} {:.3}->{}", truth.max_ap(), d.ap.verdict));
            if d.ap.verdict != want {
                wrong.push(format!("ap/{view} {amp}"));
            }
        }
    }
    report(
        6,
        "diagnosis thresholds",
        wrong.is_empty(),
        format!("{}; wrong: [{}]", seen.join(", "), wrong.join(", ")),
        start.elapsed(),
        10.0,
    );
}

fn random_frame(rng: &mut ChaCha8Rng) -> Frame {
    let mut landmarks = [Landmark::default(); NUM_LANDMARKS];
    for lm in &mut landmarks {
        *lm = Landmark::new(
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..1.0),
            rng.random_range(-0.5..0.5),
            1.0,
        );
    }
    Frame {
        frame_index: 0,
        t_ms: 0,
        width_px: 640,
        height_px: 480,
        landmarks,
    }
}

#[test]
fn criterion_7_com_properties() {
    let start = Instant::now();
    let mut failures = Vec::new();

    let published = [
        (Sex::Male, [6.94, 43.46, 2.71, 0.61, 14.16, 1.37]),
        (Sex::Female, [6.68, 42.57, 2.55, 0.56, 14.78, 1.29]),
    ];
    let mut worst_sum = 0.0f64;
    for (sex, [head, trunk, arm, hand, thigh, foot]) in published {
        let table = mass_table(sex);
        let expect = [
            (Segment::Head, head),
            (Segment::Trunk, trunk),
            (Segment::UpperArmL, arm),
            (Segment::UpperArmR, arm),
            (Segment::HandL, hand),
            (Segment::HandR, hand),
            (Segment::ThighL, thigh),
            (Segment::ThighR, thigh),
            (Segment::FootL, foot),
            (Segment::FootR, foot),
        ];
        for (seg, pct) in expect {
            if table.raw_percent(seg) != Some(pct) {
                failures.push(format!("{sex} {seg:?} raw {:?} != {pct}", table.raw_percent(seg)));
            }
        }
        for model in [TrunkModel::Whole, TrunkModel::UpperLower] {
            let sum: f64 = SegmentMassTable::new(sex, model).weights().values().sum();
            worst_sum = worst_sum.max((sum - 1.0).abs());
        }
    }
    if worst_sum > 1e-12 {
        failures.push(format!("weight sum off by {worst_sum:.3e}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let tables: Vec<_> = [Sex::Male, Sex::Female]
        .into_iter()
        .flat_map(|s| [TrunkModel::Whole, TrunkModel::UpperLower].map(|m| SegmentMassTable::new(s, m)))
        .collect();
    let (mut hull_violation, mut equi_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let frame = random_frame(&mut rng);
        let points: Vec<Vector3<f64>> = frame
            .landmarks
            .iter()
            .map(|l| Vector3::new(l.x, l.y, l.z))
            .collect();
        let rot = UnitQuaternion::from_euler_angles(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
        );
        let scale = rng.random_range(0.2..5.0);
        let shift = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        let map = |p: [f64; 3]| -> [f64; 3] {
            let q = rot * Vector3::from(p) * scale + shift;
            [q.x, q.y, q.z]
        };
        let mut moved = frame.clone();
        moved.map_coords(map);
        for table in &tables {
            let com = Vector3::from(table.compute_com(&frame));
            for _ in 0..32 {
                let u = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalize();
                let support = points.iter().map(|p| u.dot(p)).fold(f64::MIN, f64::max);
                hull_violation = hull_violation.max(u.dot(&com) - support);
            }
            let want = Vector3::from(map(com.into()));
            let got = Vector3::from(table.compute_com(&moved));
            equi_err = equi_err.max((got - want).norm() / scale);
        }
    }
    if hull_violation > 1e-12 {
        failures.push(format!("CoM outside landmark hull by {hull_violation:.3e}"));
    }
    if equi_err > 1e-12 {
        failures.push(format!("similarity equivariance error {equi_err:.3e}"));
    }

    report(
        7,
        "CoM properties",
        failures.is_empty(),
        format!(
            "weight sum error {worst_sum:.1e}, hull margin {hull_violation:.1e}, equivariance error {equi_err:.1e}{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
        start.elapsed(),
        5.0,
    );
}

fn boundary_value(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    match rng.random_range(0..8) {
        0 => lo,
        1 => hi,
        2 => 0.0,
        3 => lo + f64::EPSILON,
        4 => hi - f64::EPSILON,
        5 => rng.random_range(lo..hi) * 1e-9,
        _ => rng.random_range(lo..=hi),
    }
}

fn random_stream(rng: &mut ChaCha8Rng) -> LandmarkStream {
    let n = rng.random_range(1..40);
    let mut t = rng.random_range(-1000..1000i64);
    let frames = (0..n)
        .map(|i| {
            t += rng.random_range(1..100);
            let mut landmarks = [Landmark::default(); NUM_LANDMARKS];
            for lm in &mut landmarks {
                *lm = Landmark::new(
                    boundary_value(rng, -0.5, 1.5),
                    boundary_value(rng, -0.5, 1.5),
                    boundary_value(rng, -1e3, 1e3),
                    boundary_value(rng, 0.0, 1.0),
                );
            }
            Frame {
                frame_index: i as u64,
                t_ms: t,
                width_px: rng.random_range(1..8000),
                height_px: rng.random_range(1..8000),
                landmarks,
            }
        })
        .collect();
    let sex = if rng.random() { Sex::Male } else { Sex::Female };
    let view = if rng.random() { View::Front } else { View::Side };
    LandmarkStream {
        frames,
        meta: SubjectMeta { sex, view },
    }
}

fn bitwise_equal(a: &LandmarkStream, b: &LandmarkStream) -> bool {
    a.meta == b.meta
        && a.frames.len() == b.frames.len()
        && a.frames.iter().zip(&b.frames).all(|(f, g)| {
            f.frame_index == g.frame_index
                && f.t_ms == g.t_ms
                && f.width_px == g.width_px
                && f.height_px == g.height_px
                && f.landmarks.iter().zip(&g.landmarks).all(|(l, m)| {
                    [l.x, l.y, l.z, l.visibility]
                        .iter()
                        .zip([m.x, m.y, m.z, m.visibility])
                        .all(|(u, v)| u.to_bits() == v.to_bits())
                })
        })
}

#[test]
fn criterion_8_wire_round_trip() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = 0;
    for _ in 0..100 {
        let stream = random_stream(&mut rng);
        let plain = parse_stream(&write_stream(&stream), Some(stream.meta)).unwrap();
        let headed = parse_stream(&write_stream_with_meta(&stream), None).unwrap();
        if !bitwise_equal(&stream, &plain) || !bitwise_equal(&stream, &headed) {
            failures += 1;
        }
    }
    report(
        8,
        "wire-format round trip",
        failures == 0,
        format!("{failures}/100 streams differ after write then parse"),
        start.elapsed(),
        5.0,
    );
}
