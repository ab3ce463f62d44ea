//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL but do not fail
//! the run; any other failure does.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::process::Command;
use std::time::Instant;

use indexmap::IndexMap;
use nalgebra::Vector3;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rust_decimal::Decimal;

use ssm_core::body_model::{
    compute_compensation, verify_coverage, BodyModel, BodySegment, CompensationTable, DEFAULT_SAMPLING_STEP,
};
use ssm_core::geometry::{fit_residuals, fit_transform, AffineTransform, FitMode, Keypoint, KeypointFrame, Point3};
use ssm_core::io::config::preset;
use ssm_core::monitor::{evaluate_frame, evaluate_with_hysteresis, Event, MissingPolicy, SafetyState};
use ssm_core::policy::SeparationPolicy;
use ssm_core::simulation::{run_scenario, HumanTrajectory, ScenarioResult, SkeletonLayout, SyntheticApproach};

/// Criteria that are implemented as stated but cannot hold; see README.
const KNOWN_FAILURES: [u32; 1] = [4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn d(s: &str) -> Decimal {
    s.parse().unwrap()
}

fn check_pairs(name: &str, expected: &[(&str, &str, &str)]) -> (bool, Vec<String>) {
    let m = preset(name).unwrap().matrices();
    let mut ok = true;
    let mut notes = Vec::new();
    for (human, stop, reduced) in expected {
        let got = (m.stop(human, "end_effector"), m.reduced(human, "end_effector"));
        let want = (Some(d(stop)), Some(d(reduced)));
        ok &= got == want;
        notes.push(format!(
            "{human}={}/{}",
            got.0.map_or("-".into(), |v| v.to_string()),
            got.1.map_or("-".into(), |v| v.to_string())
        ));
    }
    (ok, notes)
}

fn criterion_1() -> Outcome {
    let (ok, notes) = check_pairs(
        "paper-scenario-a",
        &[("right_wrist", "0.26", "0.41"), ("nose", "0.21", "0.36")],
    );
    outcome(ok, format!("scenario A vs end_effector: {}", notes.join(", ")))
}

fn criterion_2() -> Outcome {
    let (ok_b, b) = check_pairs(
        "paper-scenario-b",
        &[("nose", "0.36", "0.51"), ("right_wrist", "0.26", "0.41")],
    );
    let (ok_c, c) = check_pairs(
        "paper-scenario-c",
        &[("nose", "0.46", "0.61"), ("right_wrist", "0.36", "0.51")],
    );
    outcome(ok_b && ok_c, format!("B: {}; C: {}", b.join(", "), c.join(", ")))
}

fn events(result: &ScenarioResult) -> Vec<Event> {
    result.events().into_iter().map(|(_, e)| e).collect()
}

fn criterion_3() -> Outcome {
    let cfg = preset("paper-scenario-a").unwrap();
    let t0 = Instant::now();
    let result = run_scenario(&cfg).unwrap();
    let elapsed = t0.elapsed().as_secs_f64();
    let got = events(&result);
    let order_ok = got
        == [
            Event::EnterReduced,
            Event::EnterStopped,
            Event::ResumeReduced,
            Event::ResumeNormal,
        ];

    // Largest robot keypoint drift while the stop is in force (from the first
    // frame after enter_stopped, given the actuation delay, to resume).
    let mut drift: f64 = 0.0;
    if let Some(start) = result.frames.iter().position(|f| f.event == Event::EnterStopped) {
        let delay = cfg.actuation_delay_frames;
        let end = result.frames[start..]
            .iter()
            .position(|f| f.event == Event::ResumeReduced)
            .map_or(result.frames.len() - 1, |i| start + i);
        let held = &result.frames[start + delay - 1].robot;
        for f in &result.frames[start + delay..=end] {
            for (a, b) in held.keypoints.iter().zip(&f.robot.keypoints) {
                drift = drift.max((a.position.unwrap() - b.position.unwrap()).norm());
            }
        }
    } else {
        drift = f64::INFINITY;
    }
    let names: Vec<&str> = got.iter().map(|e| e.as_str()).collect();
    outcome(
        order_ok && drift <= 1e-12 && elapsed < 5.0,
        format!(
            "events [{}], stop drift {drift:e} m, {} frames in {elapsed:.3} s",
            names.join(", "),
            result.frames.len()
        ),
    )
}

fn with_layout(name: &str, layout: SkeletonLayout) -> ssm_core::io::ScenarioConfig {
    let mut cfg = preset(name).unwrap();
    let HumanTrajectory::Synthetic(s) = &cfg.human else {
        unreachable!("synthetic preset")
    };
    cfg.human = HumanTrajectory::Synthetic(SyntheticApproach::with_layout(
        layout,
        s.start,
        s.target,
        s.approach_start,
        s.approach_speed,
        s.dwell,
        s.retreat_speed,
    ));
    cfg
}

/// Trigger pair distance at the first enter_reduced frame, and the largest
/// per-frame decrease of that pair's distance before it.
fn reduced_trigger(result: &ScenarioResult) -> (String, f64, f64) {
    let k = result
        .frames
        .iter()
        .position(|f| f.event == Event::EnterReduced)
        .expect("enter_reduced");
    let w = result.frames[k].decision.worst.clone().unwrap();
    let pair_distance = |i: usize| {
        let f = &result.frames[i];
        (f.human.position(&w.human).unwrap() - f.robot.position(&w.robot).unwrap()).norm()
    };
    let step = (1..=k)
        .map(|i| pair_distance(i - 1) - pair_distance(i))
        .fold(0.0, f64::max);
    (w.human, w.distance, step)
}

fn criterion_4() -> Outcome {
    let nose_run = run_scenario(&preset("paper-scenario-b").unwrap()).unwrap();
    let wrist_run = run_scenario(&with_layout("paper-scenario-b", SkeletonLayout::ArmForward)).unwrap();
    let (nose_kp, nose_d, nose_step) = reduced_trigger(&nose_run);
    let (wrist_kp, wrist_d, wrist_step) = reduced_trigger(&wrist_run);
    let tolerance = nose_step.max(wrist_step);
    let diff = nose_d - wrist_d;
    let pass = nose_kp == "nose" && wrist_kp == "right_wrist" && (diff - 0.15).abs() <= tolerance;
    outcome(
        pass,
        format!(
            "nose triggers at {nose_d:.4} m, wrist at {wrist_d:.4} m: difference {diff:.4} m, \
             required 0.15 ± {tolerance:.4} m (the matrices differ by 0.51 - 0.41 = 0.10 m)"
        ),
    )
}

fn body_model_strategy() -> impl Strategy<Value = BodyModel> {
    let coord = -0.3..0.3f64;
    let point = (coord.clone(), coord.clone(), coord).prop_map(|(x, y, z)| Point3::new(x, y, z));
    let segment = (any::<bool>(), point.clone(), point.clone(), 0.0..0.08f64).prop_filter_map(
        "distinct capsule endpoints",
        |(sphere, a, b, r)| {
            if sphere {
                Some(BodySegment::sphere("s", a, r))
            } else if (a - b).norm() > 1e-3 {
                let b = a + (b - a).cap_magnitude(0.35);
                Some(BodySegment::capsule("c", a, b, r))
            } else {
                None
            }
        },
    );
    (
        prop::collection::vec(segment, 1..4),
        prop::collection::vec(point, 0..3),
        0usize..3,
    )
        .prop_map(|(segments, extra, anchors)| {
            let mut keypoints = BTreeMap::new();
            // Anchor some keypoints on the segments so assignment regions vary.
            for (i, s) in segments.iter().enumerate().take(anchors.max(1)) {
                let p = match s.shape {
                    ssm_core::body_model::Shape::Sphere { center, .. } => center,
                    ssm_core::body_model::Shape::Capsule { a, .. } => a,
                };
                keypoints.insert(format!("k{i}"), p);
            }
            for (i, p) in extra.into_iter().enumerate() {
                keypoints.insert(format!("x{i}"), p);
            }
            BodyModel::new(keypoints, segments).unwrap()
        })
}

fn criterion_5() -> Outcome {
    let config = Config {
        cases: 100,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let models = Cell::new(0usize);
    let worst = Cell::new(f64::NEG_INFINITY);
    let result = runner.run(&(body_model_strategy(), any::<u64>()), |(model, seed)| {
        let table = compute_compensation(&model, DEFAULT_SAMPLING_STEP).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let report = verify_coverage(&model, &table, 10_000, &mut rng);
        models.set(models.get() + 1);
        worst.set(worst.get().max(report.worst_excess));
        prop_assert_eq!(report.trials, 10_000);
        prop_assert_eq!(report.violations, 0, "first violation {:?}", report.first_violation);
        Ok(())
    });
    outcome(
        result.is_ok(),
        match result {
            Ok(()) => format!(
                "{} models x 10000 samples, 0 violations, worst excess {:.2e} m",
                models.get(),
                worst.get()
            ),
            Err(e) => format!("{e}"),
        },
    )
}

fn criterion_6() -> Outcome {
    let step = DEFAULT_SAMPLING_STEP;
    let capsule = BodyModel::new(
        BTreeMap::from([("a".into(), Point3::origin()), ("b".into(), Point3::new(0.3, 0.0, 0.0))]),
        vec![BodySegment::capsule(
            "bar",
            Point3::origin(),
            Point3::new(0.3, 0.0, 0.0),
            0.0,
        )],
    )
    .unwrap();
    let ct = compute_compensation(&capsule, step).unwrap();
    let ca = ct.get("a").unwrap().to_string().parse::<f64>().unwrap();
    let cb = ct.get("b").unwrap().to_string().parse::<f64>().unwrap();
    let mut ok = (ca - 0.15).abs() <= step && (cb - 0.15).abs() <= step;
    let mut notes = vec![format!("capsule a={ca} b={cb}")];
    for r in [0.05, 0.1, 0.173] {
        let sphere = BodyModel::new(
            BTreeMap::from([("c".into(), Point3::new(0.1, -0.2, 0.3))]),
            vec![BodySegment::sphere("ball", Point3::new(0.1, -0.2, 0.3), r)],
        )
        .unwrap();
        let c = compute_compensation(&sphere, step)
            .unwrap()
            .get("c")
            .unwrap()
            .to_string()
            .parse::<f64>()
            .unwrap();
        ok &= (c - r).abs() <= step;
        notes.push(format!("sphere r={r} -> {c}"));
    }
    outcome(ok, notes.join(", "))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let axis = Vector3::new(
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
    );
    let truth = AffineTransform::from_rotation_vector(&(axis.normalize() * 1.1), Vector3::new(0.4, -1.2, 0.75));
    let corr: Vec<(Point3<f64>, Point3<f64>)> = (0..10)
        .map(|_| {
            let p = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            (p, truth.apply(&p))
        })
        .collect();
    let fit = fit_transform(&corr, FitMode::Rigid).unwrap();
    let (max, _) = fit_residuals(&fit, &corr);
    let param_err = (fit.linear() - truth.linear())
        .amax()
        .max((fit.translation() - truth.translation()).amax());
    outcome(
        max < 1e-9 && param_err < 1e-9,
        format!("max residual {max:.2e} m, parameter error {param_err:.2e}"),
    )
}

fn random_frames(rng: &mut ChaCha8Rng, humans: &[String], robots: &[String], t: f64) -> (KeypointFrame, KeypointFrame) {
    let mut frame = |names: &[String], spread: f64| {
        let mut f = KeypointFrame::new(t);
        for n in names {
            let p = Point3::new(
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
                rng.random_range(-spread..spread),
            );
            f.push(Keypoint::present(n.clone(), p));
        }
        f
    };
    (frame(humans, 0.6), frame(robots, 0.2))
}

fn criterion_8() -> Outcome {
    let cfg = preset("paper-scenario-a").unwrap();
    let m = cfg.matrices();
    let missing = MissingPolicy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut prev = SafetyState::Normal;
    let mut mismatches = 0;
    let mut states = BTreeMap::new();
    for k in 0..1000 {
        let (h, r) = random_frames(&mut rng, m.humans(), m.robots(), k as f64 / 30.0);
        let plain = evaluate_frame(&m, &h, &r, &missing).unwrap();
        let hyst = evaluate_with_hysteresis(&m, &h, &r, prev, &missing, 0.0).unwrap();
        if plain != hyst {
            mismatches += 1;
        }
        *states.entry(hyst.state).or_insert(0) += 1;
        prev = hyst.state;
    }
    outcome(
        mismatches == 0,
        format!("1000 frames, {mismatches} mismatches, states {states:?}"),
    )
}

fn criterion_9() -> Outcome {
    let humans: Vec<String> = (0..25).map(|i| format!("h{i:02}")).collect();
    let robots: Vec<String> = (0..10).map(|i| format!("r{i}")).collect();
    let table = |names: &[String], v: &str| {
        CompensationTable::new(names.iter().map(|n| (n.clone(), d(v))).collect::<IndexMap<_, _>>()).unwrap()
    };
    let policy = SeparationPolicy::new(d("0.05"), d("0.20"), table(&humans, "0.1"), table(&robots, "0.05")).unwrap();
    let m = policy.compile(&humans, &robots).unwrap();
    let missing = MissingPolicy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let frames: Vec<_> = (0..256)
        .map(|k| random_frames(&mut rng, &humans, &robots, k as f64))
        .collect();
    let n = 20_000;
    let mut stopped = 0usize;
    let t0 = Instant::now();
    for k in 0..n {
        let (h, r) = &frames[k % frames.len()];
        let decision = evaluate_frame(&m, h, r, &missing).unwrap();
        stopped += (decision.state == SafetyState::Stopped) as usize;
    }
    let rate = n as f64 / t0.elapsed().as_secs_f64();
    outcome(
        rate >= 1000.0,
        format!("25x10 keypoints: {rate:.0} frames/s ({stopped} stopped frames)"),
    )
}

fn criterion_10() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_ssm");
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for run in ["first", "second"] {
        let out = dir.path().join(run);
        let status = Command::new(bin)
            .args(["run", "--config", "paper-scenario-a", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(
                false,
                format!("`ssm run` failed: {}", String::from_utf8_lossy(&status.stderr)),
            );
        }
        let files: Vec<(String, Vec<u8>)> = ["decisions.csv", "pair_distances.csv"]
            .iter()
            .map(|f| (f.to_string(), std::fs::read(out.join(f)).unwrap()))
            .collect();
        outputs.push(files);
    }
    let same = outputs[0] == outputs[1];
    let sizes: Vec<String> = outputs[0].iter().map(|(n, b)| format!("{n} {} B", b.len())).collect();
    outcome(same, format!("two runs, byte-identical: {same} ({})", sizes.join(", ")))
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "table reproduction, scenario A", criterion_1),
        (2, "table reproduction, scenarios B and C", criterion_2),
        (3, "scenario A event sequence and stop freeze", criterion_3),
        (4, "head discrimination by 0.15 m", criterion_4),
        (5, "compensation coverage on random models", criterion_5),
        (6, "compensation oracles", criterion_6),
        (7, "rigid calibration recovery", criterion_7),
        (8, "zero-hysteresis equivalence", criterion_8),
        (9, "evaluation throughput", criterion_9),
        (10, "run determinism", criterion_10),
    ];
    let mut unexpected = Vec::new();
    for (id, title, check) in criteria {
        let o = check();
        let known = KNOWN_FAILURES.contains(&id);
        let tag = if o.pass { "PASS" } else { "FAIL" };
        let note = if !o.pass && known { " (known)" } else { "" };
        println!("[{tag}] {id:>2} {title}: {}{note}", o.detail);
        if o.pass == known {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
